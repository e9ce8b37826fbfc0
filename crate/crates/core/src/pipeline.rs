//! Detect → extract → stance orchestration and batch execution.
//!
//! Each task can run alone. When detection runs and says the text is not an
//! argument, extraction short-circuits to "No Topic" and stance to
//! `NoArgument` without calling the backend, unless the job is `ungated`.
//! Stance is never requested without a concrete topic.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Seek, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use futures::future::BoxFuture;
use futures::stream::{FuturesOrdered, StreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::prompt::{parse_cte_response, parse_detection_response, parse_stance_response, PromptBuilder, Task, Variant};
use crate::types::{ArgumentLabel, Instance, StanceLabel, Topic};

/// Records between checkpoints in [`run_batch_to_file`].
pub const CHECKPOINT_EVERY: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid job spec: {0}")]
    Spec(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("writing results: {0}")]
    Sink(#[from] io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Where stance gets its topic from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TopicSource {
    #[default]
    #[serde(rename = "instance")]
    FromInstance,
    #[serde(rename = "extract")]
    FromExtraction,
}

impl std::str::FromStr for TopicSource {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "instance" => Ok(TopicSource::FromInstance),
            "extract" | "extraction" => Ok(TopicSource::FromExtraction),
            other => Err(PipelineError::Spec(format!("unknown topic source '{other}'"))),
        }
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_tasks() -> BTreeSet<Task> {
    BTreeSet::from([Task::Detect, Task::Extract, Task::Stance])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    #[serde(default = "default_tasks")]
    pub tasks: BTreeSet<Task>,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub topic_source: TopicSource,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Run stance even when detection says "not an argument".
    #[serde(default)]
    pub ungated: bool,
}

impl Default for JobSpec {
    fn default() -> Self {
        JobSpec {
            tasks: default_tasks(),
            variant: Variant::WithAtn,
            topic_source: TopicSource::FromInstance,
            concurrency: default_concurrency(),
            ungated: false,
        }
    }
}

impl JobSpec {
    pub fn new(tasks: impl IntoIterator<Item = Task>) -> Self {
        JobSpec {
            tasks: tasks.into_iter().collect(),
            ..JobSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tasks.is_empty() {
            return Err(PipelineError::Spec("no tasks requested".into()));
        }
        if self.tasks.contains(&Task::Generate) {
            return Err(PipelineError::Spec("generate is not a pipeline task".into()));
        }
        if self.concurrency == 0 {
            return Err(PipelineError::Spec("concurrency must be >= 1".into()));
        }
        if self.tasks.contains(&Task::Stance)
            && self.topic_source == TopicSource::FromExtraction
            && !self.tasks.contains(&Task::Extract)
        {
            return Err(PipelineError::Spec(
                "stance with topic source 'extract' requires the extract task".into(),
            ));
        }
        Ok(())
    }

    /// Validate the spec against a concrete corpus: stance from instance
    /// topics needs every instance to carry one.
    pub fn validate_for(&self, corpus: &[Instance]) -> Result<(), PipelineError> {
        self.validate()?;
        if self.tasks.contains(&Task::Stance) && self.topic_source == TopicSource::FromInstance {
            if let Some(inst) = corpus.iter().find(|i| i.topic().is_none()) {
                return Err(PipelineError::Spec(format!(
                    "stance needs a topic but instance '{}' has none (use topic source 'extract')",
                    inst.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Complete,
    Partial,
    Failed,
}

/// Pipeline output for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub instance_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<ArgumentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<StanceLabel>,
    /// Topic the stance was judged against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance_topic: Option<Topic>,
    pub variant: Variant,
    pub status: RecordStatus,
    #[serde(default)]
    pub raw_responses: BTreeMap<Task, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<Task, String>,
    /// Wall-clock time per backend call. Not persisted, so result files stay
    /// reproducible.
    #[serde(skip)]
    pub timings: BTreeMap<Task, Duration>,
}

/// Invariant violations of a record (empty when it is consistent).
pub fn record_violations(rec: &AnalysisRecord, gated: bool) -> Vec<String> {
    let mut v = Vec::new();
    if matches!(rec.stance, Some(StanceLabel::Favor | StanceLabel::Against)) {
        match &rec.stance_topic {
            Some(t) if !t.is_no_topic() => {}
            _ => v.push("stance without a concrete topic".to_string()),
        }
    }
    if gated
        && rec.detection == Some(ArgumentLabel::NotArgument)
        && rec.stance.is_some_and(|s| s != StanceLabel::NoArgument)
    {
        v.push("non-argument with a directional stance".to_string());
    }
    if rec.status == RecordStatus::Complete && !rec.errors.is_empty() {
        v.push("complete record with errors".to_string());
    }
    v
}

async fn timed<B: Backend + ?Sized>(
    backend: &B,
    rec: &mut AnalysisRecord,
    prompt: &crate::prompt::Prompt,
) -> Option<String> {
    let started = Instant::now();
    let out = backend.complete(prompt).await;
    rec.timings.insert(prompt.task, started.elapsed());
    match out {
        Ok(raw) => {
            rec.raw_responses.insert(prompt.task, raw.clone());
            Some(raw)
        }
        Err(e) => {
            rec.errors.insert(prompt.task, e.to_string());
            None
        }
    }
}

/// Run the requested tasks for one instance in dependency order.
pub async fn analyze<B: Backend + ?Sized>(
    backend: &B,
    prompts: &PromptBuilder,
    instance: &Instance,
    spec: &JobSpec,
) -> AnalysisRecord {
    let mut rec = AnalysisRecord {
        instance_id: instance.id.clone(),
        text: instance.text.clone(),
        detection: None,
        topic: None,
        stance: None,
        stance_topic: None,
        variant: spec.variant,
        status: RecordStatus::Complete,
        raw_responses: BTreeMap::new(),
        errors: BTreeMap::new(),
        timings: BTreeMap::new(),
    };
    let text = instance.text.as_str();

    if spec.tasks.contains(&Task::Detect) {
        match prompts.build_detection_prompt(text, spec.variant) {
            Ok(p) => {
                if let Some(raw) = timed(backend, &mut rec, &p).await {
                    rec.detection = Some(parse_detection_response(&raw).label);
                }
            }
            Err(e) => {
                rec.errors.insert(Task::Detect, e.to_string());
            }
        }
    }
    let gated_out = !spec.ungated && rec.detection == Some(ArgumentLabel::NotArgument);

    if spec.tasks.contains(&Task::Extract) {
        if gated_out {
            rec.topic = Some(Topic::no_topic());
        } else {
            match prompts.build_cte_prompt(text) {
                Ok(p) => {
                    if let Some(raw) = timed(backend, &mut rec, &p).await {
                        rec.topic = Some(parse_cte_response(&raw).label);
                    }
                }
                Err(e) => {
                    rec.errors.insert(Task::Extract, e.to_string());
                }
            }
        }
    }

    if spec.tasks.contains(&Task::Stance) {
        let topic = match spec.topic_source {
            TopicSource::FromInstance => instance.topic(),
            TopicSource::FromExtraction => rec.topic.clone(),
        };
        match topic {
            _ if gated_out => rec.stance = Some(StanceLabel::NoArgument),
            Some(t) if t.is_no_topic() => rec.stance = Some(StanceLabel::NoArgument),
            Some(t) => {
                match prompts.build_stance_prompt(text, t.value(), spec.variant) {
                    Ok(p) => {
                        if let Some(raw) = timed(backend, &mut rec, &p).await {
                            rec.stance = Some(parse_stance_response(&raw).label);
                            rec.stance_topic = Some(t);
                        }
                    }
                    Err(e) => {
                        rec.errors.insert(Task::Stance, e.to_string());
                    }
                }
            }
            None => {
                let reason = match spec.topic_source {
                    TopicSource::FromInstance => "instance has no topic",
                    TopicSource::FromExtraction => "topic extraction failed",
                };
                rec.errors.insert(Task::Stance, format!("no topic available: {reason}"));
            }
        }
    }

    let requested = spec.tasks.iter().filter(|t| **t != Task::Generate).count();
    rec.status = match rec.errors.len() {
        0 => RecordStatus::Complete,
        n if n >= requested => RecordStatus::Failed,
        _ => RecordStatus::Partial,
    };
    rec
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    pub succeeded: usize,
    pub partial: usize,
    pub failed: usize,
    /// Instances already present in the output when resuming.
    pub skipped: usize,
}

impl BatchSummary {
    fn count(&mut self, rec: &AnalysisRecord) {
        match rec.status {
            RecordStatus::Complete => self.succeeded += 1,
            RecordStatus::Partial => self.partial += 1,
            RecordStatus::Failed => self.failed += 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Sinks

/// Destination for records, written by a single task in input order.
pub trait RecordSink: Send {
    fn write_record(&mut self, rec: &AnalysisRecord) -> io::Result<()>;
    /// Flush and return the number of bytes durably written.
    fn flush_offset(&mut self) -> io::Result<u64>;
}

struct CountingWriter<W> {
    inner: W,
    count: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.count += n as u64;
        Ok(n)
    }
    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// One JSON object per line.
pub struct JsonlSink<W: Write> {
    out: CountingWriter<W>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(inner: W) -> Self {
        JsonlSink::with_offset(inner, 0)
    }

    fn with_offset(inner: W, offset: u64) -> Self {
        JsonlSink {
            out: CountingWriter { inner, count: offset },
        }
    }

    pub fn into_inner(self) -> W {
        self.out.inner
    }
}

impl<W: Write + Send> RecordSink for JsonlSink<W> {
    fn write_record(&mut self, rec: &AnalysisRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")
    }
    fn flush_offset(&mut self) -> io::Result<u64> {
        self.out.flush()?;
        Ok(self.out.count)
    }
}

pub const CSV_COLUMNS: [&str; 6] = ["id", "text", "detection", "topic", "stance", "variant"];

/// Flattened CSV: `id,text,detection,topic,stance,variant`.
pub struct CsvSink<W: Write> {
    out: csv::Writer<CountingWriter<W>>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W) -> io::Result<Self> {
        let mut sink = CsvSink::with_offset(inner, 0);
        sink.out.write_record(CSV_COLUMNS).map_err(io::Error::other)?;
        Ok(sink)
    }

    fn with_offset(inner: W, offset: u64) -> Self {
        CsvSink {
            out: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(CountingWriter { inner, count: offset }),
        }
    }

    pub fn into_inner(self) -> io::Result<W> {
        self.out
            .into_inner()
            .map(|c| c.inner)
            .map_err(|e| io::Error::other(e.to_string()))
    }
}

impl<W: Write + Send> RecordSink for CsvSink<W> {
    fn write_record(&mut self, rec: &AnalysisRecord) -> io::Result<()> {
        let row = [
            rec.instance_id.clone(),
            rec.text.clone(),
            rec.detection.map(|d| d.name().to_string()).unwrap_or_default(),
            rec.topic.as_ref().map(|t| t.value().to_string()).unwrap_or_default(),
            rec.stance.map(|s| s.name().to_string()).unwrap_or_default(),
            rec.variant.as_str().to_string(),
        ];
        self.out.write_record(&row).map_err(io::Error::other)
    }
    fn flush_offset(&mut self) -> io::Result<u64> {
        self.out.flush()?;
        Ok(self.out.get_ref().count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Jsonl,
    Csv,
}

impl OutputFormat {
    /// Guess from a file extension; anything but `.csv` is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => OutputFormat::Csv,
            _ => OutputFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(OutputFormat::Jsonl),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(PipelineError::Spec(format!("unknown output format '{other}'"))),
        }
    }
}

/// Read records back from a JSON-lines result file.
pub fn read_records_jsonl(path: &Path) -> io::Result<Vec<AnalysisRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(io::Error::other))
        .collect()
}

/// Read records back from a flattened CSV result file. Raw responses are not
/// part of that format.
pub fn read_records_csv(path: &Path) -> io::Result<Vec<AnalysisRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(io::Error::other)?;
        let field = |i: usize| row.get(i).unwrap_or("").to_string();
        let bad = |e: crate::types::LabelError| io::Error::new(io::ErrorKind::InvalidData, e.to_string());
        let opt = |s: String| if s.is_empty() { None } else { Some(s) };
        out.push(AnalysisRecord {
            instance_id: field(0),
            text: field(1),
            detection: opt(field(2)).map(|s| ArgumentLabel::parse_label(&s)).transpose().map_err(bad)?,
            topic: opt(field(3)).map(Topic::new).transpose().map_err(bad)?,
            stance: opt(field(4)).map(|s| StanceLabel::parse_label(&s)).transpose().map_err(bad)?,
            stance_topic: None,
            variant: field(5)
                .parse()
                .map_err(|e: crate::prompt::PromptError| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?,
            status: RecordStatus::Complete,
            raw_responses: BTreeMap::new(),
            errors: BTreeMap::new(),
            timings: BTreeMap::new(),
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> io::Result<Vec<AnalysisRecord>> {
    match OutputFormat::from_path(path) {
        OutputFormat::Csv => read_records_csv(path),
        OutputFormat::Jsonl => read_records_jsonl(path),
    }
}

// ---------------------------------------------------------------------------
// Batch execution

async fn drive<B, F>(
    backend: &B,
    prompts: &PromptBuilder,
    corpus: &[Instance],
    spec: &JobSpec,
    sink: &mut dyn RecordSink,
    mut after_record: F,
) -> Result<BatchSummary, PipelineError>
where
    B: Backend + ?Sized,
    F: FnMut(usize, &mut dyn RecordSink) -> Result<(), PipelineError>,
{
    let mut summary = BatchSummary::default();
    // A hand-rolled window over FuturesOrdered rather than `buffered`: the
    // closure-based combinator makes the batch future unspawnable.
    let limit = spec.concurrency.max(1);
    let mut queue = corpus.iter().enumerate();
    let mut in_flight: FuturesOrdered<BoxFuture<'_, (usize, AnalysisRecord)>> = FuturesOrdered::new();
    loop {
        while in_flight.len() < limit {
            let Some((i, inst)) = queue.next() else { break };
            in_flight.push_back(Box::pin(async move { (i, analyze(backend, prompts, inst, spec).await) }));
        }
        let Some((i, rec)) = in_flight.next().await else { break };
        summary.total += 1;
        summary.count(&rec);
        if rec.status != RecordStatus::Complete {
            tracing::warn!(id = %rec.instance_id, status = ?rec.status, errors = ?rec.errors, "record incomplete");
        }
        sink.write_record(&rec)?;
        after_record(i, sink)?;
    }
    sink.flush_offset()?;
    Ok(summary)
}

/// Analyze every instance with at most `spec.concurrency` in flight. Records
/// reach `sink` in input order. Per-instance failures are recorded, not fatal;
/// a sink error aborts.
pub async fn run_batch<B: Backend + ?Sized>(
    backend: &B,
    prompts: &PromptBuilder,
    corpus: &[Instance],
    spec: &JobSpec,
    sink: &mut dyn RecordSink,
) -> Result<BatchSummary, PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    spec.validate_for(corpus)?;
    drive(backend, prompts, corpus, spec, sink, |_, _| Ok(())).await
}

/// Progress marker stored beside a result file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Records fully written, counted from the start of the corpus.
    pub records: usize,
    pub byte_offset: u64,
    /// Id of the last written instance, checked on resume.
    pub last_id: Option<String>,
    pub complete: bool,
}

pub fn checkpoint_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".checkpoint.json");
    output.with_file_name(name)
}

pub fn read_checkpoint(output: &Path) -> Result<Option<Checkpoint>, PipelineError> {
    let path = checkpoint_path(output);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| PipelineError::Checkpoint(format!("{}: {e}", path.display())))
}

fn write_checkpoint(output: &Path, cp: &Checkpoint) -> Result<(), PipelineError> {
    let path = checkpoint_path(output);
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(cp).expect("checkpoint serializes"))?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

/// [`run_batch`] into a file, checkpointing every [`CHECKPOINT_EVERY`]
/// records. With `resume`, a previous partial run of the same corpus is
/// continued after its last checkpoint; the finished file is byte-identical
/// to an uninterrupted run.
pub async fn run_batch_to_file<B: Backend + ?Sized>(
    backend: &B,
    prompts: &PromptBuilder,
    corpus: &[Instance],
    spec: &JobSpec,
    output: &Path,
    format: OutputFormat,
    resume: bool,
) -> Result<BatchSummary, PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    spec.validate_for(corpus)?;

    let prior = if resume && output.exists() { read_checkpoint(output)? } else { None };
    let (start, offset) = match &prior {
        Some(cp) => {
            if cp.records > corpus.len() {
                return Err(PipelineError::Checkpoint(format!(
                    "checkpoint covers {} records but the corpus has {}",
                    cp.records,
                    corpus.len()
                )));
            }
            let expected = cp.records.checked_sub(1).map(|i| corpus[i].id.as_str());
            if cp.last_id.as_deref() != expected {
                return Err(PipelineError::Checkpoint(format!(
                    "checkpoint last id {:?} does not match corpus id {:?}",
                    cp.last_id, expected
                )));
            }
            (cp.records, cp.byte_offset)
        }
        None => (0, 0),
    };

    let file = if start == 0 && offset == 0 {
        File::create(output)?
    } else {
        let mut f = OpenOptions::new().write(true).open(output)?;
        f.set_len(offset)?;
        f.seek(io::SeekFrom::End(0))?;
        f
    };
    let writer = BufWriter::new(file);
    let mut sink: Box<dyn RecordSink> = match (format, start == 0 && offset == 0) {
        (OutputFormat::Jsonl, _) => Box::new(JsonlSink::with_offset(writer, offset)),
        (OutputFormat::Csv, true) => Box::new(CsvSink::new(writer)?),
        (OutputFormat::Csv, false) => Box::new(CsvSink::with_offset(writer, offset)),
    };

    let rest = &corpus[start..];
    let mut summary = if rest.is_empty() {
        BatchSummary::default()
    } else {
        drive(backend, prompts, rest, spec, sink.as_mut(), |i, sink| {
            let done = start + i + 1;
            if done % CHECKPOINT_EVERY == 0 {
                let byte_offset = sink.flush_offset()?;
                tracing::debug!(records = done, byte_offset, "checkpoint");
                write_checkpoint(
                    output,
                    &Checkpoint {
                        records: done,
                        byte_offset,
                        last_id: Some(corpus[done - 1].id.clone()),
                        complete: false,
                    },
                )?;
            }
            Ok(())
        })
        .await?
    };
    let byte_offset = sink.flush_offset()?;
    write_checkpoint(
        output,
        &Checkpoint {
            records: corpus.len(),
            byte_offset,
            last_id: corpus.last().map(|i| i.id.clone()),
            complete: true,
        },
    )?;
    summary.skipped = start;
    Ok(summary)
}
