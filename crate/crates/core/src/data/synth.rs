use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::backend::Backend;
use crate::prompt::PromptBuilder;
use crate::text::{count_sentences, truncate_sentences};
use crate::types::{ArgumentLabel, ArgumentType, Instance, Style, META_ARGUMENT_TYPE, META_STYLE};

pub const META_SYNTHETIC: &str = "synthetic";

/// Working definition of each reasoning type, as given to the generator.
pub fn type_definition(t: ArgumentType) -> &'static str {
    match t {
        ArgumentType::Deductive => {
            "the conclusion follows necessarily from general premises that are taken to be true."
        }
        ArgumentType::Inductive => {
            "a general conclusion is drawn from a number of particular observations or cases."
        }
        ArgumentType::Abductive => {
            "the conclusion is offered as the most plausible explanation of some observed facts."
        }
        ArgumentType::Analogical => {
            "the conclusion rests on a similarity between the topic and some other, better understood case."
        }
        ArgumentType::Fallacious => {
            "the premises look like support but do not actually justify the conclusion, for example an appeal to popularity or a hasty generalization."
        }
    }
}

pub fn style_instruction(s: Style) -> &'static str {
    match s {
        Style::Informal => {
            "write like a regular user posting on an online forum or social media: casual wording, first person is fine."
        }
        Style::Formal => {
            "write in the register of a political speech or a legal brief: measured, precise and impersonal."
        }
    }
}

fn default_types() -> Vec<ArgumentType> {
    ArgumentType::ALL.to_vec()
}

fn default_styles() -> Vec<Style> {
    Style::ALL.to_vec()
}

fn default_range() -> (usize, usize) {
    (1, 3)
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub topics: Vec<String>,
    /// Argument texts per (type, style, topic) cell.
    pub per_cell_count: usize,
    #[serde(default = "default_types")]
    pub types: Vec<ArgumentType>,
    #[serde(default = "default_styles")]
    pub styles: Vec<Style>,
    /// Inclusive sentence-count bounds.
    #[serde(default = "default_range")]
    pub sentence_range: (usize, usize),
    /// Share of non-arguments in the final corpus, in `[0, 1)`.
    #[serde(default)]
    pub non_argument_fraction: f64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl SynthSpec {
    pub fn new(topics: impl IntoIterator<Item = impl Into<String>>, per_cell_count: usize) -> Self {
        SynthSpec {
            topics: topics.into_iter().map(Into::into).collect(),
            per_cell_count,
            types: default_types(),
            styles: default_styles(),
            sentence_range: default_range(),
            non_argument_fraction: 0.0,
            concurrency: default_concurrency(),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: &str| Err(DataError::Spec(m.to_string()));
        if self.topics.is_empty() || self.topics.iter().any(|t| t.trim().is_empty()) {
            return fail("topics must be non-empty strings");
        }
        if self.per_cell_count == 0 {
            return fail("per_cell_count must be at least 1");
        }
        if self.types.is_empty() || self.styles.is_empty() {
            return fail("types and styles must be non-empty");
        }
        let (lo, hi) = self.sentence_range;
        if lo == 0 || lo > hi {
            return fail("sentence_range must satisfy 1 <= min <= max");
        }
        if !(0.0..1.0).contains(&self.non_argument_fraction) {
            return fail("non_argument_fraction must be in [0, 1)");
        }
        if self.concurrency == 0 {
            return fail("concurrency must be at least 1");
        }
        Ok(())
    }

    /// Number of non-arguments such that they make up `non_argument_fraction`
    /// of the planned corpus.
    pub fn non_argument_count(&self) -> usize {
        let f = self.non_argument_fraction;
        (self.argument_count() as f64 * f / (1.0 - f)).round() as usize
    }

    pub fn argument_count(&self) -> usize {
        self.types.len() * self.styles.len() * self.topics.len() * self.per_cell_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub id: String,
    /// `None` for a non-argument slot.
    pub argument_type: Option<ArgumentType>,
    pub style: Style,
    pub topic: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthReport {
    pub instances: Vec<Instance>,
    pub failures: Vec<CellFailure>,
}

struct Job {
    id: String,
    argument_type: Option<ArgumentType>,
    style: Style,
    topic: String,
    sentences: usize,
}

fn plan(spec: &SynthSpec) -> Vec<Job> {
    let (lo, hi) = spec.sentence_range;
    let span = hi - lo + 1;
    let mut jobs = Vec::new();
    let mut push = |argument_type, style, topic: &str| {
        let n = jobs.len();
        jobs.push(Job {
            id: format!("synth-{:05}", n + 1),
            argument_type,
            style,
            topic: topic.to_string(),
            sentences: lo + n % span,
        });
    };
    for topic in &spec.topics {
        for t in &spec.types {
            for s in &spec.styles {
                for _ in 0..spec.per_cell_count {
                    push(Some(*t), *s, topic);
                }
            }
        }
    }
    let cells: Vec<(&String, Style)> = spec
        .topics
        .iter()
        .flat_map(|t| spec.styles.iter().map(move |s| (t, *s)))
        .collect();
    for i in 0..spec.non_argument_count() {
        let (topic, style) = cells[i % cells.len()];
        push(None, style, topic);
    }
    jobs
}

async fn run_job<B: Backend + ?Sized>(
    backend: &B,
    prompts: &PromptBuilder,
    job: &Job,
    max_sentences: usize,
) -> Result<Instance, String> {
    let definition = job.argument_type.map(|t| (t.as_str(), type_definition(t)));
    let prompt = prompts
        .build_generation_prompt(&job.topic, definition, job.style.as_str(), style_instruction(job.style), job.sentences)
        .map_err(|e| e.to_string())?;
    let raw = backend.complete(&prompt).await.map_err(|e| e.to_string())?;
    let text = truncate_sentences(raw.trim(), max_sentences);
    if count_sentences(&text) == 0 {
        return Err("backend returned no usable text".into());
    }
    let mut inst = Instance::new(&job.id, text)
        .with_meta(META_STYLE, job.style.as_str())
        .with_meta(META_SYNTHETIC, "true");
    match job.argument_type {
        Some(t) => {
            inst = inst
                .with_topic(&job.topic)
                .with_argument(ArgumentLabel::Argument)
                .with_meta(META_ARGUMENT_TYPE, t.as_str());
        }
        None => inst = inst.with_argument(ArgumentLabel::NotArgument),
    }
    Ok(inst)
}

/// Generates a labeled corpus, one backend call per planned text.
///
/// Arguments come first, ordered by topic, type, style; non-arguments follow,
/// spread round-robin over (topic, style). Texts longer than the sentence
/// range are truncated. A failed call is itemized in the report and
/// generation carries on.
pub async fn generate_synthetic<B: Backend + ?Sized>(
    backend: &B,
    prompts: &PromptBuilder,
    spec: &SynthSpec,
) -> Result<SynthReport, DataError> {
    spec.validate()?;
    let jobs = plan(spec);
    let max = spec.sentence_range.1;
    let results: Vec<Result<Instance, String>> = stream::iter(jobs.iter())
        .map(|job| run_job(backend, prompts, job, max))
        .buffered(spec.concurrency)
        .collect()
        .await;
    let mut report = SynthReport::default();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(inst) => report.instances.push(inst),
            Err(error) => report.failures.push(CellFailure {
                id: job.id.clone(),
                argument_type: job.argument_type,
                style: job.style,
                topic: job.topic.clone(),
                error,
            }),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::prompt::Task;
    use std::collections::BTreeMap;

    #[tokio::test]
    async fn full_grid_one_topic() {
        let mut spec = SynthSpec::new(["school uniforms"], 1);
        spec.non_argument_fraction = 1.0 / 6.0;
        let r = generate_synthetic(&MockBackend::new(), &PromptBuilder::default(), &spec).await.unwrap();
        assert!(r.failures.is_empty());
        let args: Vec<_> = r.instances.iter().filter(|i| i.gold_argument == Some(ArgumentLabel::Argument)).collect();
        assert_eq!(args.len(), 10);
        assert_eq!(r.instances.len(), 12);
        let mut cells = BTreeMap::new();
        for i in &args {
            *cells.entry((i.meta[META_ARGUMENT_TYPE].clone(), i.meta[META_STYLE].clone())).or_insert(0) += 1;
        }
        assert_eq!(cells.len(), 10);
        assert!(r.instances.iter().all(|i| i.meta[META_SYNTHETIC] == "true"));
        for i in &r.instances {
            let n = count_sentences(&i.text);
            assert!((1..=3).contains(&n), "{n} sentences: {}", i.text);
            assert!(crate::types::validate_instance(i).is_empty());
        }
    }

    #[tokio::test]
    async fn deterministic() {
        let spec = SynthSpec::new(["a", "b"], 2);
        let p = PromptBuilder::default();
        let a = generate_synthetic(&MockBackend::new(), &p, &spec).await.unwrap();
        let b = generate_synthetic(&MockBackend::new(), &p, &spec).await.unwrap();
        assert_eq!(a, b);
        assert_eq!(a.instances.len(), 40);
    }

    #[tokio::test]
    async fn failures_are_itemized() {
        let spec = SynthSpec::new(["nuclear power", "zoos"], 1);
        let backend = MockBackend::new().failing_on(Some(Task::Generate), "zoos");
        let r = generate_synthetic(&backend, &PromptBuilder::default(), &spec).await.unwrap();
        assert_eq!(r.instances.len(), 10);
        assert_eq!(r.failures.len(), 10);
        assert!(r.failures.iter().all(|f| f.topic == "zoos"));
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec::new(["x"], 0).validate().is_err());
        let mut s = SynthSpec::new(["x"], 1);
        s.sentence_range = (2, 1);
        assert!(s.validate().is_err());
        s.sentence_range = (1, 3);
        s.non_argument_fraction = 1.0;
        assert!(s.validate().is_err());
        s.non_argument_fraction = 0.5;
        assert_eq!(s.non_argument_count(), 10);
    }
}
