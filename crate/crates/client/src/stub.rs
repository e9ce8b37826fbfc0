//! A local OpenAI-compatible server for tests and offline smoke runs.
//!
//! Replies can be scripted per request (status and body) and otherwise come
//! from a responder function. The default responder reads the task, text and
//! topic back out of the rendered prompt and answers like
//! [`MockBackend`](argmine_core::MockBackend).

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use argmine_core::backend::HashingEmbedder;
use argmine_core::{MockBackend, Prompt, Task, Variant};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};

pub type Responder = dyn Fn(&Value) -> String + Send + Sync;

/// One scripted reply. Scripted replies are consumed first, in order.
#[derive(Debug, Clone)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
}

impl StubReply {
    pub fn status(status: u16) -> Self {
        StubReply { status, body: json!({"error": {"message": "scripted"}}).to_string() }
    }
}

struct StubState {
    script: Mutex<VecDeque<StubReply>>,
    responder: Box<Responder>,
    delay: Duration,
    hits: AtomicU64,
    in_flight: AtomicU64,
    peak: AtomicU64,
    bodies: Mutex<Vec<Vec<u8>>>,
    auth_headers: Mutex<Vec<Option<String>>>,
}

pub struct StubServer {
    addr: SocketAddr,
    state: Arc<StubState>,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

#[derive(Default)]
pub struct StubBuilder {
    script: Vec<StubReply>,
    responder: Option<Box<Responder>>,
    delay: Duration,
}

impl StubBuilder {
    pub fn script(mut self, replies: impl IntoIterator<Item = StubReply>) -> Self {
        self.script.extend(replies);
        self
    }

    pub fn responder(mut self, f: impl Fn(&Value) -> String + Send + Sync + 'static) -> Self {
        self.responder = Some(Box::new(f));
        self
    }

    /// Time each chat request takes before replying.
    pub fn delay(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }

    pub async fn start(self) -> std::io::Result<StubServer> {
        let state = Arc::new(StubState {
            script: Mutex::new(self.script.into()),
            responder: self.responder.unwrap_or_else(|| Box::new(mock_responder)),
            delay: self.delay,
            hits: AtomicU64::new(0),
            in_flight: AtomicU64::new(0),
            peak: AtomicU64::new(0),
            bodies: Mutex::new(Vec::new()),
            auth_headers: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .route("/v1/embeddings", post(embeddings))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(StubServer { addr, state, task })
    }
}

impl StubServer {
    pub fn builder() -> StubBuilder {
        StubBuilder::default()
    }

    /// Base URL to use as `endpoint_url`, ending in `/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn hits(&self) -> u64 {
        self.state.hits.load(Ordering::SeqCst)
    }

    /// Most chat requests seen in flight at once.
    pub fn peak_in_flight(&self) -> u64 {
        self.state.peak.load(Ordering::SeqCst)
    }

    /// Raw request bodies in arrival order.
    pub fn bodies(&self) -> Vec<Vec<u8>> {
        self.state.bodies.lock().expect("stub lock").clone()
    }

    pub fn auth_headers(&self) -> Vec<Option<String>> {
        self.state.auth_headers.lock().expect("stub lock").clone()
    }
}

fn record(state: &StubState, headers: &axum::http::HeaderMap, body: &Bytes) {
    state.hits.fetch_add(1, Ordering::SeqCst);
    state.bodies.lock().expect("stub lock").push(body.to_vec());
    let auth = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    state.auth_headers.lock().expect("stub lock").push(auth);
}

fn scripted(state: &StubState) -> Option<Response> {
    let reply = state.script.lock().expect("stub lock").pop_front()?;
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    Some((status, [("content-type", "application/json")], reply.body).into_response())
}

async fn chat(State(state): State<Arc<StubState>>, headers: axum::http::HeaderMap, body: Bytes) -> Response {
    record(&state, &headers, &body);
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.peak.fetch_max(now, Ordering::SeqCst);
    if !state.delay.is_zero() {
        tokio::time::sleep(state.delay).await;
    }
    let resp = match scripted(&state) {
        Some(r) => r,
        None => match serde_json::from_slice::<Value>(&body) {
            Ok(req) => {
                let content = (state.responder)(&req);
                axum::Json(chat_completion_body(&req, &content)).into_response()
            }
            Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
        },
    };
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    resp
}

async fn embeddings(State(state): State<Arc<StubState>>, headers: axum::http::HeaderMap, body: Bytes) -> Response {
    record(&state, &headers, &body);
    if let Some(r) = scripted(&state) {
        return r;
    }
    let Ok(req) = serde_json::from_slice::<Value>(&body) else {
        return (StatusCode::BAD_REQUEST, "invalid JSON").into_response();
    };
    let inputs: Vec<String> = match &req["input"] {
        Value::String(s) => vec![s.clone()],
        Value::Array(a) => a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
        _ => return (StatusCode::BAD_REQUEST, "missing input").into_response(),
    };
    let e = HashingEmbedder::default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": e.embed_one(t)}))
        .collect();
    axum::Json(json!({"object": "list", "model": req["model"], "data": data})).into_response()
}

/// Wraps `content` in a chat-completion response body.
pub fn chat_completion_body(req: &Value, content: &str) -> Value {
    json!({
        "id": "chatcmpl-stub",
        "object": "chat.completion",
        "created": 0,
        "model": req["model"],
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0}
    })
}

fn message(req: &Value, role: &str) -> String {
    req["messages"]
        .as_array()
        .and_then(|ms| ms.iter().find(|m| m["role"] == role))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string()
}

/// Recovers task, text and topic from a prompt rendered with the default
/// templates and answers the way [`MockBackend`] would.
pub fn mock_responder(req: &Value) -> String {
    let user = message(req, "user");
    let task = if user.contains("'Argument' or 'NoArgument'") {
        Task::Detect
    } else if user.contains("'Favor', 'Against'") {
        Task::Stance
    } else {
        Task::Extract
    };
    let mut vars = BTreeMap::new();
    if let Some(rest) = user.split_once("Text: ").map(|(_, r)| r) {
        let text = match task {
            Task::Extract => rest.trim_end(),
            _ => rest.rsplit_once("\n\n").map_or(rest, |(t, _)| t),
        };
        vars.insert("text".to_string(), text.to_string());
    }
    if task == Task::Stance {
        if let Some(topic) = user
            .strip_prefix("Topic: \"")
            .and_then(|r| r.split_once("\"\n"))
            .map(|(t, _)| t)
        {
            vars.insert("topic".to_string(), topic.to_string());
        }
    }
    let prompt = Prompt { system: message(req, "system"), user, task, variant: Variant::NoAtn, vars };
    MockBackend::respond(&prompt)
}
