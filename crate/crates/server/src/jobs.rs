//! On-disk job store and the single FIFO worker.
//!
//! Each job lives in its own directory:
//!
//! ```text
//! <root>/<id>/job.json          state, spec, counts, timestamps
//! <root>/<id>/corpus.jsonl      uploaded corpus, normalized
//! <root>/<id>/results.<ext>     output, plus results.<ext>.checkpoint.json
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use argmine_core::data::{load_corpus, save_corpus, CorpusFile, CorpusFormat};
use argmine_core::pipeline::{read_records, run_batch_to_file, BatchSummary, JobSpec, OutputFormat, RecordStatus};
use argmine_core::{Backend, Instance, PromptBuilder};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Queued → Running → Done | Failed, nothing else.
    pub fn can_move_to(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }

    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCounts {
    pub total: usize,
    pub done: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub spec: JobSpec,
    pub output_format: OutputFormat,
    pub counts: JobCounts,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("illegal job transition {from:?} -> {to:?}")]
    Transition { from: JobState, to: JobState },
    #[error("job queue is full ({0} jobs waiting)")]
    QueueFull(usize),
    #[error("unknown job '{0}'")]
    NotFound(String),
    #[error("{0}")]
    Input(String),
    #[error("job store: {0}")]
    Io(#[from] std::io::Error),
}

impl Job {
    pub fn transition(&mut self, next: JobState) -> Result<(), JobError> {
        if !self.state.can_move_to(next) {
            return Err(JobError::Transition { from: self.state, to: next });
        }
        self.state = next;
        match next {
            JobState::Running => self.started_at = Some(Utc::now()),
            JobState::Done | JobState::Failed => self.finished_at = Some(Utc::now()),
            JobState::Queued => {}
        }
        Ok(())
    }

    fn finish(&mut self, summary: &BatchSummary) -> Result<(), JobError> {
        self.counts.done = summary.succeeded + summary.partial;
        self.counts.failed = summary.failed;
        self.transition(JobState::Done)
    }
}

pub fn results_file_name(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Jsonl => "results.jsonl",
        OutputFormat::Csv => "results.csv",
    }
}

/// Job metadata on disk plus an in-memory index.
pub struct JobStore {
    root: PathBuf,
    jobs: Mutex<HashMap<String, Job>>,
    waiting: AtomicUsize,
    capacity: usize,
    queue: mpsc::UnboundedSender<String>,
}

impl JobStore {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn results_path(&self, job: &Job) -> PathBuf {
        self.job_dir(&job.id).join(results_file_name(job.output_format))
    }

    fn corpus_path(&self, id: &str) -> PathBuf {
        self.job_dir(id).join("corpus.jsonl")
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().expect("job index lock").get(id).cloned()
    }

    /// Jobs waiting in the queue (not yet running).
    pub fn waiting(&self) -> usize {
        self.waiting.load(Ordering::SeqCst)
    }

    fn persist(&self, job: &Job) -> Result<(), JobError> {
        let dir = self.job_dir(&job.id);
        std::fs::create_dir_all(&dir)?;
        let tmp = dir.join("job.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(job).expect("job serializes"))?;
        std::fs::rename(tmp, dir.join("job.json"))?;
        self.jobs.lock().expect("job index lock").insert(job.id.clone(), job.clone());
        Ok(())
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Job) -> Result<(), JobError>) -> Result<Job, JobError> {
        let mut job = self.get(id).ok_or_else(|| JobError::NotFound(id.to_string()))?;
        f(&mut job)?;
        self.persist(&job)?;
        Ok(job)
    }

    /// Validates and stores a new job, then queues it.
    pub fn submit(&self, corpus: &[Instance], spec: JobSpec, output_format: OutputFormat) -> Result<Job, JobError> {
        if corpus.is_empty() {
            return Err(JobError::Input("corpus has no valid instances".into()));
        }
        spec.validate_for(corpus).map_err(|e| JobError::Input(e.to_string()))?;
        let reserved = self.waiting.fetch_add(1, Ordering::SeqCst);
        if reserved >= self.capacity {
            self.waiting.fetch_sub(1, Ordering::SeqCst);
            return Err(JobError::QueueFull(reserved));
        }
        let job = Job {
            id: uuid::Uuid::new_v4().simple().to_string(),
            state: JobState::Queued,
            spec,
            output_format,
            counts: JobCounts { total: corpus.len(), ..JobCounts::default() },
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
            error: None,
        };
        let stored = std::fs::create_dir_all(self.job_dir(&job.id))
            .map_err(JobError::from)
            .and_then(|_| {
                save_corpus(corpus, &self.corpus_path(&job.id), CorpusFormat::Jsonl)
                    .map_err(|e| JobError::Io(std::io::Error::other(e.to_string())))
            })
            .and_then(|_| self.persist(&job));
        if let Err(e) = stored {
            self.waiting.fetch_sub(1, Ordering::SeqCst);
            return Err(e);
        }
        self.queue.send(job.id.clone()).expect("worker outlives the store");
        tracing::info!(id = %job.id, total = job.counts.total, "job queued");
        Ok(job)
    }
}

/// Opens (or creates) a store at `root` and starts its worker.
///
/// Jobs found in `Queued` or `Running` state are queued again, oldest
/// first; running ones continue from their last checkpoint.
pub fn start(
    root: impl Into<PathBuf>,
    capacity: usize,
    backend: Arc<dyn Backend>,
    prompts: Arc<PromptBuilder>,
) -> Result<Arc<JobStore>, JobError> {
    let root = root.into();
    std::fs::create_dir_all(&root)?;
    let mut existing = Vec::new();
    for entry in std::fs::read_dir(&root)? {
        let path = entry?.path().join("job.json");
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        match serde_json::from_str::<Job>(&text) {
            Ok(job) => existing.push(job),
            Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable job"),
        }
    }
    existing.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));

    let (tx, rx) = mpsc::unbounded_channel();
    let pending: Vec<String> = existing.iter().filter(|j| !j.state.is_finished()).map(|j| j.id.clone()).collect();
    let store = Arc::new(JobStore {
        root,
        jobs: Mutex::new(existing.into_iter().map(|j| (j.id.clone(), j)).collect()),
        waiting: AtomicUsize::new(0),
        capacity,
        queue: tx,
    });
    for id in pending {
        if store.get(&id).is_some_and(|j| j.state == JobState::Queued) {
            store.waiting.fetch_add(1, Ordering::SeqCst);
        }
        store.queue.send(id).expect("receiver is alive");
    }
    tokio::spawn(worker(store.clone(), rx, backend, prompts));
    Ok(store)
}

async fn worker(
    store: Arc<JobStore>,
    mut rx: mpsc::UnboundedReceiver<String>,
    backend: Arc<dyn Backend>,
    prompts: Arc<PromptBuilder>,
) {
    while let Some(id) = rx.recv().await {
        let Some(job) = store.get(&id) else { continue };
        let resume = job.state == JobState::Running;
        if job.state == JobState::Queued {
            store.waiting.fetch_sub(1, Ordering::SeqCst);
            if let Err(e) = store.update(&id, |j| j.transition(JobState::Running)) {
                tracing::error!(%id, error = %e, "cannot start job");
                continue;
            }
        } else if job.state.is_finished() {
            continue;
        }
        let outcome = run_job(&store, &job, backend.as_ref(), &prompts, resume).await;
        let result = store.update(&id, |j| match &outcome {
            Ok(summary) => j.finish(summary),
            Err(e) => {
                j.error = Some(e.clone());
                j.transition(JobState::Failed)
            }
        });
        match result {
            Ok(j) => tracing::info!(%id, state = ?j.state, "job finished"),
            Err(e) => tracing::error!(%id, error = %e, "cannot record job outcome"),
        }
    }
}

async fn run_job(
    store: &JobStore,
    job: &Job,
    backend: &dyn Backend,
    prompts: &PromptBuilder,
    resume: bool,
) -> Result<BatchSummary, String> {
    let corpus = load_corpus(&CorpusFile::new(store.corpus_path(&job.id)))
        .map_err(|e| e.to_string())?
        .instances;
    let output = store.results_path(job);
    let mut summary = run_batch_to_file(backend, prompts, &corpus, &job.spec, &output, job.output_format, resume)
        .await
        .map_err(|e| e.to_string())?;
    if summary.skipped > 0 {
        // Records written before the restart are read back for the counts.
        summary = BatchSummary::default();
        for r in read_records(&output).map_err(|e| e.to_string())? {
            summary.total += 1;
            match r.status {
                RecordStatus::Complete => summary.succeeded += 1,
                RecordStatus::Partial => summary.partial += 1,
                RecordStatus::Failed => summary.failed += 1,
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions() {
        use JobState::*;
        let all = [Queued, Running, Done, Failed];
        let legal: Vec<(JobState, JobState)> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_move_to(*b))
            .collect();
        assert_eq!(legal, vec![(Queued, Running), (Running, Done), (Running, Failed)]);
    }
}
