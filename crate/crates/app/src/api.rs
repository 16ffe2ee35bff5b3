//! JSON-over-HTTP adapter. Handlers decode the request, call one library
//! operation and encode its result; no pipeline logic lives here.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use novapipe_core::config::{PreflightIssue, TrainingConfig};
use novapipe_core::contract::{self, ContractError, InputDescriptor, InputError};
use novapipe_core::guidance::{self, rewrite::TextRewriter, GuidanceError};
use novapipe_core::intake::{profile_dataset, Row, PREVIEW_ROWS};
use novapipe_core::{DataReport, GuidanceContext};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::jobs::{JobError, JobQueue};
use crate::store::{Store, StoreError};

/// Largest accepted upload.
pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub jobs: JobQueue,
    /// Optional rephrasing of guidance messages; `None` serves templates as
    /// rendered.
    pub rewriter: Option<Arc<dyn TextRewriter>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadResponse {
    pub dataset_id: String,
    pub report: DataReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub column_names: Vec<String>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub dataset_id: String,
    pub config: TrainingConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceRequest {
    pub context: GuidanceContext,
}

/// Error responses: `{"error": {"code", "message"}}`, except pre-flight
/// failures (`{"issues": [...]}`) and inference input errors
/// (`{"errors": [...]}`).
#[derive(Debug)]
pub enum ApiError {
    Coded {
        status: StatusCode,
        code: &'static str,
        message: String,
    },
    Preflight(Vec<PreflightIssue>),
    Inputs(Vec<InputError>),
}

impl ApiError {
    fn coded(status: StatusCode, code: &'static str, message: impl ToString) -> Self {
        ApiError::Coded {
            status,
            code,
            message: message.to_string(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        ApiError::coded(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::Coded { status, code, message } => {
                (status, Json(json!({ "error": { "code": code, "message": message } }))).into_response()
            }
            ApiError::Preflight(issues) => {
                (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "issues": issues }))).into_response()
            }
            ApiError::Inputs(errors) => {
                (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response()
            }
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownDataset(_) => ApiError::coded(StatusCode::NOT_FOUND, "UnknownDataset", e),
            StoreError::UnknownModel(_) => ApiError::coded(StatusCode::NOT_FOUND, "UnknownModel", e),
            StoreError::Parse(ref p) => ApiError::coded(StatusCode::BAD_REQUEST, p.code(), e),
            StoreError::Contract(_) | StoreError::Io(_) => ApiError::internal(e),
        }
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::UnknownDataset(_) => ApiError::coded(StatusCode::NOT_FOUND, "UnknownDataset", e),
            JobError::UnknownJob(_) => ApiError::coded(StatusCode::NOT_FOUND, "UnknownJob", e),
            JobError::PreflightFailed(issues) => ApiError::Preflight(issues),
            JobError::InvalidConfig(_) => ApiError::coded(StatusCode::BAD_REQUEST, "InvalidConfig", e),
            JobError::DatasetMismatch { .. } => ApiError::coded(StatusCode::BAD_REQUEST, "DatasetMismatch", e),
            JobError::Store(s) => s.into(),
        }
    }
}

impl From<GuidanceError> for ApiError {
    fn from(e: GuidanceError) -> Self {
        let code = match e {
            GuidanceError::InconsistentContext(_) => "InconsistentContext",
            GuidanceError::UnknownMetric(_) => "UnknownMetric",
            GuidanceError::InvalidValue(_) => "InvalidValue",
            _ => return ApiError::internal(e),
        };
        ApiError::coded(StatusCode::UNPROCESSABLE_ENTITY, code, e)
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::coded(StatusCode::BAD_REQUEST, "MalformedRequest", e))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/datasets", post(upload_dataset))
        .route("/api/datasets/{id}/report", get(dataset_report))
        .route("/api/datasets/{id}/preview", get(dataset_preview))
        .route("/api/train", post(submit_training))
        .route("/api/jobs/{id}", get(poll_job))
        .route("/api/models/{id}/report", get(model_report))
        .route("/api/models/{id}/metadata", get(model_metadata))
        .route("/api/models/{id}/cascade-plan", get(model_cascade_plan))
        .route("/api/models/{id}/inputs", get(model_inputs))
        .route("/api/models/{id}/predict", post(predict))
        .route("/api/guidance", post(guidance_messages))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn upload_dataset(State(s): State<AppState>, body: Bytes) -> Result<Json<UploadResponse>, ApiError> {
    let resp = blocking(move || {
        let d = s.store.put_dataset(&body)?;
        Ok(UploadResponse {
            dataset_id: d.id().0.clone(),
            report: profile_dataset(&d),
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn dataset_report(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<DataReport>, ApiError> {
    let report = blocking(move || Ok(profile_dataset(&*s.store.dataset(&id)?))).await?;
    Ok(Json(report))
}

async fn dataset_preview(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<Preview>, ApiError> {
    let d = s.store.dataset(&id)?;
    Ok(Json(Preview {
        column_names: d.column_names().to_vec(),
        rows: d.rows().iter().take(PREVIEW_ROWS).cloned().collect(),
    }))
}

async fn submit_training(State(s): State<AppState>, body: Bytes) -> Result<Json<TrainResponse>, ApiError> {
    let req: TrainRequest = parse_body(&body)?;
    let job_id = blocking(move || Ok(s.jobs.submit(&req.dataset_id, req.config)?)).await?;
    Ok(Json(TrainResponse { job_id }))
}

async fn poll_job(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<crate::jobs::Job>, ApiError> {
    Ok(Json(s.jobs.poll(&id)?))
}

async fn stored_model(s: AppState, id: String) -> Result<crate::store::StoredModel, ApiError> {
    blocking(move || Ok(s.store.model(&id)?)).await
}

async fn model_report(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let m = stored_model(s, id).await?;
    Ok(Json(&m.1.metrics_snapshot).into_response())
}

async fn model_metadata(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let m = stored_model(s, id).await?;
    Ok(Json(&m.1).into_response())
}

/// The plan for cascade models, `null` for flat ones.
async fn model_cascade_plan(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let m = stored_model(s, id).await?;
    Ok(Json(&m.1.cascade_plan).into_response())
}

async fn model_inputs(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Vec<InputDescriptor>>, ApiError> {
    let m = stored_model(s, id).await?;
    Ok(Json(contract::input_descriptors(&m.1)))
}

async fn predict(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: PredictRequest = parse_body(&body)?;
    let m = stored_model(s, id).await?;
    match contract::predict(&m.0, &m.1, &req.inputs) {
        Ok(p) => Ok(Json(p).into_response()),
        Err(ContractError::Inputs(errors)) => Err(ApiError::Inputs(errors)),
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn guidance_messages(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: GuidanceRequest = parse_body(&body)?;
    let mut messages = guidance::guide(&req.context)?;
    if let Some(rw) = s.rewriter.clone() {
        let tier = req.context.tier;
        messages = blocking(move || {
            Ok(messages
                .into_iter()
                .map(|m| guidance::rewrite::rewrite_message(m, tier, rw.as_ref()))
                .collect())
        })
        .await?;
    }
    Ok(Json(messages).into_response())
}
