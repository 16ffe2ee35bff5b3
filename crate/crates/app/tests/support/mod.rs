#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use novapipe::api::{router, AppState};
use novapipe::jobs::{training_runner, Job, JobQueue, JobState};
use novapipe::store::Store;
use tower::ServiceExt;

pub struct Service {
    pub app: Router,
    pub store: Arc<Store>,
    _dir: tempfile::TempDir,
}

pub fn service() -> Service {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let jobs = JobQueue::start(store.clone(), 1, training_runner(store.clone()));
    let app = router(AppState {
        store: store.clone(),
        jobs,
        rewriter: None,
    });
    Service { app, store, _dir: dir }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Vec<u8>>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body.into()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Method::GET, uri, Vec::new()).await
}

pub async fn post(app: &Router, uri: &str, body: impl Into<Vec<u8>>) -> (StatusCode, Vec<u8>) {
    call(app, Method::POST, uri, body).await
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

/// Polls until the job finishes, checking that every observed transition
/// is legal and that progress never goes backwards.
pub async fn wait_for_job(app: &Router, job_id: &str) -> Job {
    let mut last: Option<Job> = None;
    for _ in 0..6000 {
        let (status, body) = get(app, &format!("/api/jobs/{job_id}")).await;
        assert_eq!(status, StatusCode::OK);
        let job: Job = serde_json::from_slice(&body).unwrap();
        if let Some(prev) = &last {
            assert!(
                job.state.reachable_from(prev.state),
                "{:?} -> {:?}",
                prev.state,
                job.state
            );
            assert!(prev.progress.fraction_done <= job.progress.fraction_done);
        }
        if job.state.is_finished() {
            return job;
        }
        last = Some(job);
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {job_id} did not finish");
}

/// `created_at` is the one metadata field that legitimately differs
/// between two runs.
pub fn without_timestamp(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("created_at");
    v
}

pub const DONE: JobState = JobState::Done;
