use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use argmine_core::backend::BackendError;
use argmine_core::pipeline::{run_batch_to_file, JobSpec, OutputFormat};
use argmine_core::data::{load_corpus, CorpusFile};
use argmine_core::{Backend, MockBackend, Prompt, PromptBuilder};
use argmine_server::{router, AppState, Job, JobState};
use async_trait::async_trait;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const GMO: &str = "Glyphosate is a chemical in GMOs and Glyphosate is bad for you, therefore GMOs are bad for you.";
const BOUNDARY: &str = "XyZboundary42";

fn corpus_fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus12.csv")
}

fn app_with(backend: Arc<dyn Backend>, dir: &Path, capacity: usize) -> Router {
    let state = AppState::start(backend, Arc::new(PromptBuilder::default()), dir, capacity).unwrap();
    router(state)
}

fn app(dir: &Path) -> Router {
    app_with(Arc::new(MockBackend::new()), dir, 8)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn post_json(app: &Router, path: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(path)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn get(app: &Router, path: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(path).body(Body::empty()).unwrap()).await
}

fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> Request<Body> {
    let mut body = Vec::new();
    for (name, file_name, data) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match file_name {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\n\r\n").as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    Request::post("/jobs")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

async fn submit(app: &Router, parts: &[(&str, Option<&str>, &[u8])]) -> (StatusCode, Value) {
    let (status, bytes) = send(app, multipart(parts)).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn wait_finished(app: &Router, id: &str) -> Job {
    for _ in 0..500 {
        let (status, bytes) = get(app, &format!("/jobs/{id}")).await;
        assert_eq!(status, StatusCode::OK);
        let job: Job = serde_json::from_slice(&bytes).unwrap();
        if job.state.is_finished() {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test]
async fn detect_extract_stance() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, v) = post_json(&app, "/detect", json!({"text": GMO})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["label"], "Argument");
    assert_eq!(v["confidence_basis"], "ExactMatch");
    let (_, v) = post_json(&app, "/detect", json!({"text": "The sky is blue.", "variant": "no-atn"})).await;
    assert_eq!(v["label"], "NoArgument");

    let (s, v) = post_json(&app, "/extract", json!({"text": "GMOs are bad because they contain glyphosate"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["topic"], "GMOs");

    let (s, v) = post_json(&app, "/stance", json!({"text": GMO, "topic": "GMOs"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["label"], "Against");
}

#[tokio::test]
async fn input_errors_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, v) = post_json(&app, "/stance", json!({"text": GMO})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("topic"));
    let (s, _) = post_json(&app, "/detect", json!({"text": "  "})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = send(
        &app,
        Request::post("/detect").header("content-type", "application/json").body(Body::from("{")).unwrap(),
    )
    .await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn analyze_gmo_example() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, v) = post_json(&app, "/analyze", json!({"text": GMO, "topic": "GMOs"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["detection"], 1);
    assert_eq!(v["stance"], json!(argmine_core::StanceLabel::Against.code()));
    assert_eq!(v["stance_topic"], "GMOs");
    assert_eq!(v["status"], "complete");

    // Without a topic the extracted one is used.
    let (s, v) = post_json(&app, "/analyze", json!({"text": "GMOs are bad because they contain glyphosate"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["topic"], "GMOs");
    assert_eq!(v["stance_topic"], "GMOs");
}

#[tokio::test]
async fn backend_failure_is_502() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(Arc::new(MockBackend::new().failing_on(None, "Glyphosate")), dir.path(), 8);
    let (s, v) = post_json(&app, "/detect", json!({"text": GMO})).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
    assert!(v["error"].as_str().unwrap().contains("transport"));
    let (s, _) = post_json(&app, "/analyze", json!({"text": GMO, "topic": "GMOs"})).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
}

#[tokio::test]
async fn batch_job_matches_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let csv = std::fs::read(corpus_fixture()).unwrap();
    let (s, created) = submit(&app, &[("file", Some("corpus12.csv"), &csv)]).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{created}");
    assert_eq!(created["total"], 12);
    assert_eq!(created["rejected"], 0);
    let id = created["job_id"].as_str().unwrap();

    let job = wait_finished(&app, id).await;
    assert_eq!(job.state, JobState::Done, "{:?}", job.error);
    assert_eq!(job.counts.total, 12);
    assert_eq!(job.counts.done + job.counts.failed, 12);
    assert!(job.started_at.is_some() && job.finished_at.is_some());

    let (s, results) = get(&app, &format!("/jobs/{id}/results")).await;
    assert_eq!(s, StatusCode::OK);

    let corpus = load_corpus(&CorpusFile::new(corpus_fixture())).unwrap().instances;
    let out = dir.path().join("direct.jsonl");
    run_batch_to_file(&MockBackend::new(), &PromptBuilder::default(), &corpus, &JobSpec::default(), &out, OutputFormat::Jsonl, false)
        .await
        .unwrap();
    assert_eq!(results, std::fs::read(out).unwrap());
}

#[tokio::test]
async fn job_spec_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let csv = std::fs::read(corpus_fixture()).unwrap();
    let spec = br#"{"tasks":["detect"],"variant":"no-atn"}"#;
    let (s, created) = submit(&app, &[("file", Some("c.csv"), &csv), ("spec", None, spec), ("output", None, b"csv")]).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = created["job_id"].as_str().unwrap();
    let job = wait_finished(&app, id).await;
    assert_eq!(job.state, JobState::Done);
    let (_, results) = get(&app, &format!("/jobs/{id}/results")).await;
    let text = String::from_utf8(results).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains("no-atn"));
}

#[tokio::test]
async fn bad_uploads_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, _) = submit(&app, &[("spec", None, b"{}")]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let csv = std::fs::read(corpus_fixture()).unwrap();
    let (s, v) = submit(&app, &[("file", Some("c.csv"), &csv), ("spec", None, b"{\"tasks\":[]}")]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, v) = submit(&app, &[("file", Some("c.csv"), &csv), ("preset", None, b"ukp")]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("sentence"));
    let (s, _) = submit(&app, &[("file", Some("c.csv"), b"id,text\n")]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_job_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(get(&app, "/jobs/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/jobs/nope/results").await.0, StatusCode::NOT_FOUND);
}

/// Blocks every call until released.
struct Gate(tokio::sync::Semaphore);

#[async_trait]
impl Backend for Gate {
    async fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        let _p = self.0.acquire().await.unwrap();
        Ok(MockBackend::respond(prompt))
    }
    fn name(&self) -> String {
        "gate".into()
    }
}

#[tokio::test]
async fn results_before_done_is_409() {
    let dir = tempfile::tempdir().unwrap();
    let gate = Arc::new(Gate(tokio::sync::Semaphore::new(0)));
    let app = app_with(gate.clone(), dir.path(), 8);
    let csv = std::fs::read(corpus_fixture()).unwrap();
    let (_, created) = submit(&app, &[("file", Some("c.csv"), &csv)]).await;
    let id = created["job_id"].as_str().unwrap();
    let (s, _) = get(&app, &format!("/jobs/{id}/results")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    gate.0.add_permits(1000);
    assert_eq!(wait_finished(&app, id).await.state, JobState::Done);
    assert_eq!(get(&app, &format!("/jobs/{id}/results")).await.0, StatusCode::OK);
}

#[tokio::test]
async fn full_queue_is_503() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(Arc::new(MockBackend::new()), dir.path(), 0);
    let csv = std::fs::read(corpus_fixture()).unwrap();
    let (s, _) = submit(&app, &[("file", Some("c.csv"), &csv)]).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn running_job_resumes_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let csv = std::fs::read(corpus_fixture()).unwrap();
    let (id, first) = {
        let app = app(dir.path());
        let (_, created) = submit(&app, &[("file", Some("c.csv"), &csv)]).await;
        let id = created["job_id"].as_str().unwrap().to_string();
        wait_finished(&app, &id).await;
        let (_, results) = get(&app, &format!("/jobs/{id}/results")).await;
        (id, results)
    };
    // Pretend the process died mid-run.
    let job_path = dir.path().join(&id).join("job.json");
    let mut job: Job = serde_json::from_slice(&std::fs::read(&job_path).unwrap()).unwrap();
    job.state = JobState::Running;
    job.finished_at = None;
    job.counts.done = 0;
    std::fs::write(&job_path, serde_json::to_vec(&job).unwrap()).unwrap();

    let app = app(dir.path());
    let again = wait_finished(&app, &id).await;
    assert_eq!(again.state, JobState::Done);
    assert_eq!(again.counts.done + again.counts.failed, 12);
    assert_eq!(get(&app, &format!("/jobs/{id}/results")).await.1, first);
}
