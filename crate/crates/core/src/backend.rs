//! Inference backends.
//!
//! [`Backend`] turns a rendered [`Prompt`] into raw model text and
//! [`Embedder`] turns strings into vectors. Remote implementations live in
//! the `argmine-client` crate; this module carries the shared configuration,
//! the error taxonomy and deterministic offline implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::prompt::{Prompt, Task};
use crate::text::words;

/// Embedding model used when none is configured.
pub const DEFAULT_EMBEDDING_MODEL: &str = "sentence-transformers/all-mpnet-base-v2";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Network failure, timeout, or retryable status after all retries.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("invalid request: {0}")]
    Input(String),
}

/// An API key that never shows up in `Debug` output.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecretString(String);

impl SecretString {
    pub fn new(s: impl Into<String>) -> Self {
        SecretString(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SecretString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretString(***)")
    }
}

fn default_temperature() -> f64 {
    0.0
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_concurrent() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_embedding_model() -> String {
    DEFAULT_EMBEDDING_MODEL.to_string()
}

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`. `/chat/completions` and
    /// `/embeddings` are appended.
    pub endpoint_url: String,
    pub model_id: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<SecretString>,
    /// Environment variable consulted when `api_key` is unset.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    /// First retry delay; doubled on every further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_embedding_model")]
    pub embedding_model: String,
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            model_id: model_id.into(),
            api_key: None,
            api_key_env: None,
            temperature: default_temperature(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_concurrent: default_max_concurrent(),
            backoff_base_ms: default_backoff_ms(),
            embedding_model: default_embedding_model(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.endpoint_url.trim().is_empty() {
            return Err(BackendError::Input("endpoint_url must not be empty".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(BackendError::Input("model_id must not be empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Input("temperature must be >= 0".into()));
        }
        if self.max_concurrent < 1 {
            return Err(BackendError::Input("max_concurrent must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(BackendError::Input("timeout_secs must be > 0".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Explicit key first, then the configured environment variable.
    pub fn resolve_api_key(&self) -> Option<SecretString> {
        self.api_key.clone().or_else(|| {
            self.api_key_env
                .as_deref()
                .and_then(|var| std::env::var(var).ok())
                .filter(|k| !k.is_empty())
                .map(SecretString)
        })
    }
}

/// A text embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub model_id: String,
}

impl Embedding {
    pub fn cosine(&self, other: &Embedding) -> f64 {
        cosine(&self.vector, &other.vector)
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Check the shape contract of an embedding batch.
pub fn check_embeddings(inputs: usize, out: &[Embedding]) -> Result<(), BackendError> {
    if out.len() != inputs {
        return Err(BackendError::BadResponse(format!(
            "expected {inputs} embeddings, got {}",
            out.len()
        )));
    }
    if let Some(first) = out.first() {
        let dim = first.vector.len();
        if dim == 0 {
            return Err(BackendError::BadResponse("empty embedding vector".into()));
        }
        for e in out {
            if e.vector.len() != dim {
                return Err(BackendError::BadResponse("embedding lengths differ".into()));
            }
            if e.vector.iter().any(|x| !x.is_finite()) {
                return Err(BackendError::BadResponse("non-finite embedding entry".into()));
            }
        }
    }
    Ok(())
}

#[async_trait]
pub trait Backend: Send + Sync {
    /// Return the assistant message for `prompt`.
    async fn complete(&self, prompt: &Prompt) -> Result<String, BackendError>;

    /// Short name used in reports, e.g. the model id.
    fn name(&self) -> String;
}

#[async_trait]
pub trait Embedder: Send + Sync {
    /// One embedding per input, in input order.
    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError>;
}

#[async_trait]
impl<T: Backend + ?Sized> Backend for std::sync::Arc<T> {
    async fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        (**self).complete(prompt).await
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

#[async_trait]
impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError> {
        (**self).embed(texts).await
    }
}

fn require_texts(texts: &[String]) -> Result<(), BackendError> {
    if texts.is_empty() {
        return Err(BackendError::Input("no texts to embed".into()));
    }
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(BackendError::Input("cannot embed an empty string".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mock backend

const SUPPORT_CUES: &[&str] = &["because", "therefore", "since", "so", "thus", "hence", "consequently", "given"];
const SUPPORT_PHRASES: &[&str] = &["as a result", "due to", "which means"];
const ASSERTION_CUES: &[&str] = &[
    "should", "must", "is", "are", "was", "were", "will", "would", "need", "needs", "ought", "cannot",
    "can't", "helps", "help", "harms", "makes", "causes", "means", "bad", "good", "better", "worse",
    "wrong", "important", "plausible", "like",
];
const FAVOR_CUES: &[&str] = &[
    "good", "great", "helps", "help", "benefit", "benefits", "beneficial", "protect", "protects",
    "improve", "improves", "safe", "support", "supports", "necessary", "essential", "positive",
    "valuable", "right", "better", "works",
];
const AGAINST_CUES: &[&str] = &[
    "bad", "harm", "harms", "harmful", "dangerous", "ban", "banned", "risk", "risky", "wrong", "worse",
    "unnecessary", "against", "not", "never", "stop", "threat", "costly", "ineffective", "fails",
    "failing", "limited",
];
const CAPITALIZED_STOPWORDS: &[&str] = &[
    "The", "A", "An", "I", "It", "Its", "This", "That", "These", "Those", "We", "They", "He", "She",
    "You", "My", "Our", "Your", "Their", "Every", "No", "If", "When", "Given", "Yesterday", "Everyone",
    "Honestly", "Accordingly", "People", "There", "Everybody", "In", "On", "Of", "And", "But",
];
/// Words either side of a topic mention that count toward its polarity.
const STANCE_WINDOW: usize = 6;

/// One recorded call to [`MockBackend`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockCall {
    pub task: Task,
    pub text: Option<String>,
    pub topic: Option<String>,
}

/// Deterministic rule-based stand-in for an LLM.
///
/// * detect: `Argument` iff the text has an assertion cue and a support cue.
/// * stance: `NoArgument` unless the detect rule fires and the topic occurs in
///   the text; otherwise polarity words near the topic decide.
/// * extract: the first run of capitalized words that are not stopwords.
/// * generate: fixed sentence templates keyed by argument type and style.
#[derive(Debug, Default)]
pub struct MockBackend {
    calls: Mutex<Vec<MockCall>>,
    failures: Vec<(Option<Task>, String)>,
}

impl MockBackend {
    pub fn new() -> Self {
        MockBackend::default()
    }

    /// Fail every call whose text contains `needle` (optionally only for `task`).
    pub fn failing_on(mut self, task: Option<Task>, needle: impl Into<String>) -> Self {
        self.failures.push((task, needle.into()));
        self
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().expect("mock call log poisoned").clone()
    }

    pub fn reset_calls(&self) {
        self.calls.lock().expect("mock call log poisoned").clear();
    }

    /// The pure response function, without logging or failure injection.
    pub fn respond(prompt: &Prompt) -> String {
        let text = prompt.var("text").unwrap_or(&prompt.user);
        match prompt.task {
            Task::Detect => mock_detect(text).name().to_string(),
            Task::Stance => mock_stance(text, prompt.var("topic").unwrap_or("")).to_string(),
            Task::Extract => match mock_extract(text) {
                Some(span) => format!("Topic: {span}"),
                None => "Topic: No Topic".to_string(),
            },
            Task::Generate => mock_generate(prompt),
        }
    }
}

#[async_trait]
impl Backend for MockBackend {
    async fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        let text = prompt.var("text").map(str::to_string);
        self.calls.lock().expect("mock call log poisoned").push(MockCall {
            task: prompt.task,
            text: text.clone(),
            topic: prompt.var("topic").map(str::to_string),
        });
        let haystack = text.as_deref().or(prompt.var("topic")).unwrap_or("");
        for (task, needle) in &self.failures {
            if task.is_none_or(|t| t == prompt.task) && haystack.contains(needle.as_str()) {
                return Err(BackendError::Transport {
                    attempts: 1,
                    message: format!("injected failure for '{needle}'"),
                });
            }
        }
        Ok(MockBackend::respond(prompt))
    }

    fn name(&self) -> String {
        "mock".to_string()
    }
}

fn has_support_cue(ws: &[String]) -> bool {
    let joined = format!(" {} ", ws.join(" "));
    ws.iter().any(|w| SUPPORT_CUES.contains(&w.as_str()))
        || SUPPORT_PHRASES.iter().any(|p| joined.contains(&format!(" {p} ")))
}

fn mock_detect(text: &str) -> crate::types::ArgumentLabel {
    use crate::types::ArgumentLabel;
    let ws = words(text);
    let assertion = ws.iter().any(|w| ASSERTION_CUES.contains(&w.as_str()));
    if assertion && !ws.is_empty() && has_support_cue(&ws) {
        ArgumentLabel::Argument
    } else {
        ArgumentLabel::NotArgument
    }
}

fn mock_stance(text: &str, topic: &str) -> &'static str {
    use crate::types::ArgumentLabel;
    if mock_detect(text) == ArgumentLabel::NotArgument {
        return "NoArgument";
    }
    let ws = words(text);
    let tw = words(topic);
    if tw.is_empty() || tw.len() > ws.len() {
        return "NoArgument";
    }
    let mut window = BTreeSet::new();
    for start in 0..=ws.len() - tw.len() {
        if ws[start..start + tw.len()] == tw[..] {
            let lo = start.saturating_sub(STANCE_WINDOW);
            let hi = (start + tw.len() + STANCE_WINDOW).min(ws.len());
            window.extend((lo..hi).filter(|i| *i < start || *i >= start + tw.len()));
        }
    }
    let favor = window.iter().filter(|&&i| FAVOR_CUES.contains(&ws[i].as_str())).count();
    let against = window.iter().filter(|&&i| AGAINST_CUES.contains(&ws[i].as_str())).count();
    match favor.cmp(&against) {
        std::cmp::Ordering::Greater => "Favor",
        std::cmp::Ordering::Less => "Against",
        std::cmp::Ordering::Equal => "NoArgument",
    }
}

fn mock_extract(text: &str) -> Option<String> {
    let mut span: Vec<&str> = Vec::new();
    for raw in text.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let ends_clause = raw.ends_with(|c: char| !c.is_alphanumeric());
        let capitalized = word.chars().next().is_some_and(char::is_uppercase)
            && !CAPITALIZED_STOPWORDS.contains(&word);
        if capitalized {
            span.push(word);
            if ends_clause {
                break;
            }
        } else if !span.is_empty() {
            break;
        }
    }
    (!span.is_empty()).then(|| span.join(" "))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn mock_generate(prompt: &Prompt) -> String {
    let topic = prompt.var("topic").unwrap_or("this issue");
    let cap = capitalize(topic);
    let formal = prompt.var("style") == Some("formal");
    let sentences: usize = prompt.var("sentences").and_then(|s| s.parse().ok()).unwrap_or(1).max(1);
    let (first, fillers): (String, [&str; 2]) = match prompt.var("argument_type") {
        Some(kind) => {
            let lead = match kind {
                "deductive" => format!("{cap} causes harm and whatever causes harm should be limited, therefore {topic} should be limited."),
                "inductive" => format!("Every time {topic} was tried it failed, so {topic} will keep failing."),
                "abductive" => format!("Given the rising complaints about {topic}, it is plausible that {topic} needs reform."),
                "analogical" => format!("{cap} is like a leaky roof, because ignoring it only makes the damage worse."),
                _ => format!("Everyone I know dislikes {topic}, therefore {topic} must be wrong."),
            };
            let fillers = if formal {
                ["This matter warrants careful consideration.", "The record on this point is substantial."]
            } else {
                ["I see this all the time.", "Everybody around me says the same."]
            };
            (if formal { format!("Accordingly, {lead}") } else { lead }, fillers)
        }
        None => {
            let fillers = if formal {
                ["The report was published last month.", "It contains several tables."]
            } else {
                ["It was pretty long.", "There were a lot of photos."]
            };
            (format!("Yesterday I read an article about {topic}."), fillers)
        }
    };
    std::iter::once(first.as_str())
        .chain(fillers.iter().copied())
        .take(sentences.min(3))
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Offline embedders

/// Feature-hashing bag-of-words embedder. Identical strings map to identical
/// vectors; it carries no semantics beyond shared words.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dims: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dims: 256 }
    }
}

impl HashingEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding dimension must be positive");
        HashingEmbedder { dims }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dims];
        for w in words(text) {
            let h = fnv1a(w.as_bytes());
            let idx = (h % self.dims as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

#[async_trait]
impl Embedder for HashingEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError> {
        require_texts(texts)?;
        Ok(texts
            .iter()
            .map(|t| Embedding {
                vector: self.embed_one(t),
                model_id: format!("hashing-{}", self.dims),
            })
            .collect())
    }
}

/// Lookup-table embedder for tests and fixtures.
#[derive(Debug, Clone, Default)]
pub struct StaticEmbedder {
    table: BTreeMap<String, Vec<f64>>,
    calls: std::sync::Arc<Mutex<usize>>,
}

impl StaticEmbedder {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        StaticEmbedder {
            table: entries.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            calls: Default::default(),
        }
    }

    /// Number of `embed` batches served so far.
    pub fn batches(&self) -> usize {
        *self.calls.lock().expect("poisoned")
    }
}

#[async_trait]
impl Embedder for StaticEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError> {
        require_texts(texts)?;
        *self.calls.lock().expect("poisoned") += 1;
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .map(|v| Embedding {
                        vector: v.clone(),
                        model_id: "static".into(),
                    })
                    .ok_or_else(|| BackendError::BadResponse(format!("no vector for '{t}'")))
            })
            .collect()
    }
}
