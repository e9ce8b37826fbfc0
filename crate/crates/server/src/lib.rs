//! HTTP front end: single-text endpoints plus a file-based batch job queue.
//!
//! | Method | Path                 | Body                                   |
//! |--------|----------------------|----------------------------------------|
//! | POST   | `/detect`            | `{text, variant?}`                     |
//! | POST   | `/extract`           | `{text}`                               |
//! | POST   | `/stance`            | `{text, topic, variant?}`              |
//! | POST   | `/analyze`           | `{text, topic?, variant?, ungated?}`   |
//! | POST   | `/jobs`              | multipart: `file`, `spec?`, `preset?`, `format?`, `output?` |
//! | GET    | `/jobs/{id}`         |                                        |
//! | GET    | `/jobs/{id}/results` |                                        |
//!
//! Errors are `{"error": "..."}` with 400 for bad input, 404 for unknown
//! jobs, 409 for results of unfinished jobs, 502 for backend failures and
//! 503 when the job queue is full.

pub mod jobs;

use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use argmine_core::data::{read_corpus_csv, read_corpus_jsonl, CorpusFormat, SchemaMapping};
use argmine_core::pipeline::{analyze, AnalysisRecord, JobSpec, OutputFormat, RecordStatus, TopicSource};
use argmine_core::prompt::{parse_cte_response, parse_detection_response, parse_stance_response, ConfidenceBasis};
use argmine_core::{Backend, BackendError, Instance, PromptBuilder, Task, Variant};
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use jobs::{Job, JobCounts, JobError, JobState, JobStore};

/// Largest accepted upload.
pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub backend: Arc<dyn Backend>,
    pub prompts: Arc<PromptBuilder>,
    pub jobs: Arc<JobStore>,
    pub default_variant: Variant,
}

impl AppState {
    /// Opens the job store under `job_dir` and starts its worker.
    pub fn start(
        backend: Arc<dyn Backend>,
        prompts: Arc<PromptBuilder>,
        job_dir: impl Into<std::path::PathBuf>,
        queue_capacity: usize,
    ) -> Result<Self, JobError> {
        let jobs = jobs::start(job_dir, queue_capacity, backend.clone(), prompts.clone())?;
        Ok(AppState { backend, prompts, jobs, default_variant: Variant::WithAtn })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Input(m) => ApiError::bad_request(m),
            other => ApiError::new(StatusCode::BAD_GATEWAY, other.to_string()),
        }
    }
}

impl From<argmine_core::prompt::PromptError> for ApiError {
    fn from(e: argmine_core::prompt::PromptError) -> Self {
        match e {
            argmine_core::prompt::PromptError::Input(m) => ApiError::bad_request(m),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        let status = match &e {
            JobError::QueueFull(_) => StatusCode::SERVICE_UNAVAILABLE,
            JobError::NotFound(_) => StatusCode::NOT_FOUND,
            JobError::Input(_) => StatusCode::BAD_REQUEST,
            JobError::Transition { .. } | JobError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct TextRequest {
    pub text: String,
    #[serde(default)]
    pub topic: Option<String>,
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub ungated: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LabelResponse {
    pub label: String,
    pub confidence_basis: ConfidenceBasis,
    pub raw: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TopicResponse {
    pub topic: String,
    pub confidence_basis: ConfidenceBasis,
    pub raw: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct JobCreated {
    pub job_id: String,
    pub state: JobState,
    pub total: usize,
    pub rejected: usize,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/detect", post(detect))
        .route("/extract", post(extract))
        .route("/stance", post(stance))
        .route("/analyze", post(analyze_one))
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/results", get(job_results))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}

fn require_text(req: &TextRequest) -> ApiResult<&str> {
    if req.text.trim().is_empty() {
        return Err(ApiError::bad_request("'text' must be a non-empty string"));
    }
    Ok(&req.text)
}

async fn detect(State(st): State<AppState>, Json(req): Json<TextRequest>) -> ApiResult<Json<LabelResponse>> {
    let text = require_text(&req)?;
    let prompt = st.prompts.build_detection_prompt(text, req.variant.unwrap_or(st.default_variant))?;
    let raw = st.backend.complete(&prompt).await?;
    let out = parse_detection_response(&raw);
    Ok(Json(LabelResponse { label: out.label.name().to_string(), confidence_basis: out.confidence_basis, raw }))
}

async fn extract(State(st): State<AppState>, Json(req): Json<TextRequest>) -> ApiResult<Json<TopicResponse>> {
    let text = require_text(&req)?;
    let prompt = st.prompts.build_cte_prompt(text)?;
    let raw = st.backend.complete(&prompt).await?;
    let out = parse_cte_response(&raw);
    Ok(Json(TopicResponse { topic: out.label.value().to_string(), confidence_basis: out.confidence_basis, raw }))
}

async fn stance(State(st): State<AppState>, Json(req): Json<TextRequest>) -> ApiResult<Json<LabelResponse>> {
    let text = require_text(&req)?;
    let topic = req
        .topic
        .as_deref()
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("'topic' is required for stance"))?;
    let prompt = st.prompts.build_stance_prompt(text, topic, req.variant.unwrap_or(st.default_variant))?;
    let raw = st.backend.complete(&prompt).await?;
    let out = parse_stance_response(&raw);
    Ok(Json(LabelResponse { label: out.label.name().to_string(), confidence_basis: out.confidence_basis, raw }))
}

/// Full pipeline for one text. Without a topic, stance uses the extracted one.
async fn analyze_one(State(st): State<AppState>, Json(req): Json<TextRequest>) -> ApiResult<Json<AnalysisRecord>> {
    let text = require_text(&req)?;
    let mut instance = Instance::new("request", text);
    let topic_source = match req.topic.as_deref().filter(|t| !t.trim().is_empty()) {
        Some(t) => {
            instance = instance.with_topic(t);
            TopicSource::FromInstance
        }
        None => TopicSource::FromExtraction,
    };
    let spec = JobSpec {
        tasks: [Task::Detect, Task::Extract, Task::Stance].into(),
        variant: req.variant.unwrap_or(st.default_variant),
        topic_source,
        concurrency: 1,
        ungated: req.ungated,
    };
    let rec = analyze(st.backend.as_ref(), &st.prompts, &instance, &spec).await;
    if rec.status == RecordStatus::Failed {
        let detail: Vec<String> = rec.errors.iter().map(|(t, e)| format!("{t}: {e}")).collect();
        return Err(ApiError::new(StatusCode::BAD_GATEWAY, detail.join("; ")));
    }
    Ok(Json(rec))
}

#[derive(Default)]
struct Upload {
    file: Option<(Option<String>, Vec<u8>)>,
    spec: Option<String>,
    preset: Option<String>,
    format: Option<String>,
    output: Option<String>,
}

async fn read_upload(mut form: Multipart) -> ApiResult<Upload> {
    let mut up = Upload::default();
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::bad_request(format!("multipart: {e}"));
    while let Some(field) = form.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "file" => {
                let file_name = field.file_name().map(str::to_string);
                up.file = Some((file_name, field.bytes().await.map_err(bad)?.to_vec()));
            }
            "spec" => up.spec = Some(field.text().await.map_err(bad)?),
            "preset" => up.preset = Some(field.text().await.map_err(bad)?),
            "format" => up.format = Some(field.text().await.map_err(bad)?),
            "output" => up.output = Some(field.text().await.map_err(bad)?),
            other => return Err(ApiError::bad_request(format!("unexpected form field '{other}'"))),
        }
    }
    Ok(up)
}

async fn create_job(State(st): State<AppState>, form: Multipart) -> ApiResult<(StatusCode, Json<JobCreated>)> {
    let up = read_upload(form).await?;
    let (file_name, bytes) = up.file.ok_or_else(|| ApiError::bad_request("missing 'file' field"))?;
    let name = file_name.unwrap_or_else(|| "upload.csv".into());
    let path = Path::new(&name);
    let format = match up.format.as_deref() {
        Some(f) => f.parse::<CorpusFormat>().map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => CorpusFormat::from_path(path),
    };
    let schema = match up.preset.as_deref() {
        Some(p) => SchemaMapping::preset(p).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => SchemaMapping::generic(),
    };
    let report = match format {
        CorpusFormat::Csv => read_corpus_csv(Cursor::new(bytes), &schema, path),
        CorpusFormat::Jsonl => read_corpus_jsonl(Cursor::new(bytes), &schema, path),
    }
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let spec: JobSpec = match up.spec.as_deref().filter(|s| !s.trim().is_empty()) {
        Some(s) => serde_json::from_str(s).map_err(|e| ApiError::bad_request(format!("spec: {e}")))?,
        None => JobSpec::default(),
    };
    let output = match up.output.as_deref() {
        Some(o) => o.parse::<OutputFormat>().map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => OutputFormat::Jsonl,
    };
    let job = st.jobs.submit(&report.instances, spec, output)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(JobCreated {
            job_id: job.id,
            state: job.state,
            total: job.counts.total,
            rejected: report.rejects.len(),
        }),
    ))
}

async fn job_status(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Job>> {
    st.jobs.get(&id).map(Json).ok_or_else(|| JobError::NotFound(id).into())
}

async fn job_results(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let job = st.jobs.get(&id).ok_or(JobError::NotFound(id))?;
    if job.state != JobState::Done {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("job {} is {:?}, results are available once it is done", job.id, job.state),
        ));
    }
    let bytes = tokio::fs::read(st.jobs.results_path(&job))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("reading results: {e}")))?;
    let content_type = match job.output_format {
        OutputFormat::Jsonl => "application/x-ndjson",
        OutputFormat::Csv => "text/csv",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}
