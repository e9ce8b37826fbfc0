//! OpenAI-compatible HTTP backends.
//!
//! [`OpenAiClient`] speaks the `/chat/completions` and `/embeddings` JSON
//! shapes, retries transient failures with exponential backoff and caps
//! in-flight requests at `max_concurrent`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use argmine_core::backend::{check_embeddings, BackendConfig, BackendError, Embedder, Embedding, SecretString};
use argmine_core::{Backend, Prompt};
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

#[cfg(feature = "stub")]
pub mod stub;

/// Longest wait honored from a `Retry-After` header.
const MAX_RETRY_AFTER: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage<'a> {
    pub role: &'a str,
    pub content: &'a str,
}

/// The complete request body. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: [ChatMessage<'a>; 2],
    pub temperature: f64,
}

impl<'a> ChatRequest<'a> {
    pub fn new(config: &'a BackendConfig, prompt: &'a Prompt) -> Self {
        ChatRequest {
            model: &config.model_id,
            messages: [
                ChatMessage { role: "system", content: &prompt.system },
                ChatMessage { role: "user", content: &prompt.user },
            ],
            temperature: config.temperature,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("chat request serializes")
    }
}

#[derive(Debug, Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Extracts the assistant text from a chat-completion response body.
pub fn parse_chat_response(body: &[u8]) -> Result<String, BackendError> {
    let resp: ChatResponse =
        serde_json::from_slice(body).map_err(|e| BackendError::BadResponse(format!("chat response: {e}")))?;
    resp.choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::BadResponse("chat response has no message content".into()))
}

/// Extracts embeddings in input order from an embeddings response body.
pub fn parse_embedding_response(body: &[u8], default_model: &str, inputs: usize) -> Result<Vec<Embedding>, BackendError> {
    let resp: EmbeddingResponse =
        serde_json::from_slice(body).map_err(|e| BackendError::BadResponse(format!("embedding response: {e}")))?;
    let model_id = resp.model.unwrap_or_else(|| default_model.to_string());
    let mut data = resp.data;
    if data.iter().all(|d| d.index.is_some()) {
        data.sort_by_key(|d| d.index);
    }
    let out: Vec<Embedding> = data
        .into_iter()
        .map(|d| Embedding { vector: d.embedding, model_id: model_id.clone() })
        .collect();
    check_embeddings(inputs, &out)?;
    Ok(out)
}

/// Request counters, shared by clones of a client.
#[derive(Debug, Default)]
pub struct ClientStats {
    requests: AtomicU64,
    retries: AtomicU64,
    in_flight: AtomicU64,
    peak_in_flight: AtomicU64,
}

impl ClientStats {
    /// HTTP attempts made, retries included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> u64 {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

enum Attempt {
    Done(Vec<u8>),
    Retry { reason: String, after: Option<Duration> },
    Fatal(BackendError),
}

#[derive(Clone)]
pub struct OpenAiClient {
    config: BackendConfig,
    api_key: Option<SecretString>,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
    stats: Arc<ClientStats>,
}

impl std::fmt::Debug for OpenAiClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiClient")
            .field("endpoint_url", &self.config.endpoint_url)
            .field("model_id", &self.config.model_id)
            .finish_non_exhaustive()
    }
}

impl OpenAiClient {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| BackendError::Input(format!("http client: {e}")))?;
        Ok(OpenAiClient {
            api_key: config.resolve_api_key(),
            permits: Arc::new(Semaphore::new(config.max_concurrent)),
            stats: Arc::new(ClientStats::default()),
            http,
            config,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.endpoint_url.trim_end_matches('/'))
    }

    fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.config.backoff_base_ms.saturating_mul(1u64 << retry.min(16)))
    }

    async fn attempt(&self, url: &str, body: &[u8]) -> Attempt {
        let mut req = self
            .http
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key.expose());
        }
        self.stats.requests.fetch_add(1, Ordering::SeqCst);
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry { reason: e.to_string(), after: None },
        };
        let status = resp.status();
        let after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(|s| Duration::from_secs(s).min(MAX_RETRY_AFTER));
        let bytes = match resp.bytes().await {
            Ok(b) => b.to_vec(),
            Err(e) => return Attempt::Retry { reason: e.to_string(), after: None },
        };
        match status.as_u16() {
            200..=299 => Attempt::Done(bytes),
            401 | 403 => Attempt::Fatal(BackendError::Auth { status: status.as_u16() }),
            429 | 500..=599 => Attempt::Retry { reason: format!("HTTP {status}"), after },
            _ => {
                let snippet: String = String::from_utf8_lossy(&bytes).chars().take(200).collect();
                Attempt::Fatal(BackendError::BadResponse(format!("HTTP {status}: {snippet}")))
            }
        }
    }

    /// POSTs `body`, retrying transport errors, 429 and 5xx up to
    /// `max_retries` times. Holds one concurrency permit throughout.
    pub async fn post_json(&self, path: &str, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        self.stats.enter();
        let out = self.post_with_retries(&self.url(path), body).await;
        self.stats.leave();
        out
    }

    async fn post_with_retries(&self, url: &str, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let mut retry = 0;
        loop {
            match self.attempt(url, body).await {
                Attempt::Done(bytes) => return Ok(bytes),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { reason, after } => {
                    if retry >= self.config.max_retries {
                        return Err(BackendError::Transport { attempts: retry + 1, message: reason });
                    }
                    let wait = after.unwrap_or_else(|| self.backoff(retry));
                    retry += 1;
                    self.stats.retries.fetch_add(1, Ordering::SeqCst);
                    tracing::warn!(url, retry, wait_ms = wait.as_millis() as u64, %reason, "retrying request");
                    tokio::time::sleep(wait).await;
                }
            }
        }
    }
}

#[async_trait]
impl Backend for OpenAiClient {
    async fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        if prompt.system.trim().is_empty() && prompt.user.trim().is_empty() {
            return Err(BackendError::Input("empty prompt".into()));
        }
        let body = ChatRequest::new(&self.config, prompt).to_bytes();
        let bytes = self.post_json("chat/completions", &body).await?;
        parse_chat_response(&bytes)
    }

    fn name(&self) -> String {
        self.config.model_id.clone()
    }
}

#[async_trait]
impl Embedder for OpenAiClient {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError> {
        if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
            return Err(BackendError::Input("embedding inputs must be non-empty strings".into()));
        }
        let body = serde_json::to_vec(&EmbeddingRequest { model: &self.config.embedding_model, input: texts })
            .expect("embedding request serializes");
        let bytes = self.post_json("embeddings", &body).await?;
        parse_embedding_response(&bytes, &self.config.embedding_model, texts.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use argmine_core::{PromptBuilder, Variant};

    #[test]
    fn request_field_order() {
        let cfg = BackendConfig::new("http://x", "m");
        let p = PromptBuilder::default().build_detection_prompt("a", Variant::NoAtn).unwrap();
        let body = String::from_utf8(ChatRequest::new(&cfg, &p).to_bytes()).unwrap();
        assert!(body.starts_with("{\"model\":\"m\",\"messages\":[{\"role\":\"system\""));
        assert!(body.ends_with(",\"temperature\":0.0}"));
    }

    #[test]
    fn parses_responses() {
        let body = br#"{"choices":[{"index":0,"message":{"role":"assistant","content":"Favor"}}]}"#;
        assert_eq!(parse_chat_response(body).unwrap(), "Favor");
        assert!(matches!(parse_chat_response(b"{}"), Err(BackendError::BadResponse(_))));
        assert!(matches!(parse_chat_response(br#"{"choices":[]}"#), Err(BackendError::BadResponse(_))));
        let emb = br#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let out = parse_embedding_response(emb, "m", 2).unwrap();
        assert_eq!(out[0].vector, vec![1.0, 0.0]);
        assert!(parse_embedding_response(emb, "m", 3).is_err());
    }

    #[test]
    fn backoff_doubles() {
        let mut cfg = BackendConfig::new("http://x", "m");
        cfg.backoff_base_ms = 100;
        let c = OpenAiClient::new(cfg).unwrap();
        assert_eq!(c.backoff(0), Duration::from_millis(100));
        assert_eq!(c.backoff(2), Duration::from_millis(400));
        assert_eq!(c.url("chat/completions"), "http://x/chat/completions");
    }
}
