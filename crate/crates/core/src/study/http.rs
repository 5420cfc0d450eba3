//! JSON HTTP API over [`StudyService`] plus the stateless analyze endpoint.
//!
//! Tokens travel as `Authorization: Bearer <token>`. Creating studies and
//! calling analyze take the service token; `next` and `annotations` take a
//! rater token; `unlock`, `model-run` and `report` take the study's admin token.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use super::{items_from_manifest, NewStudy, StudyError, StudyService};
use crate::densenet::{Params, Pipeline};
use crate::ecg_io::load_manifest;
use crate::label::MODEL_CLASSES;
use crate::preprocess::{LeadSignal, Segment};

pub struct AppState {
    pub service: Mutex<StudyService>,
    pub model: Option<Arc<Params>>,
    pub service_token: String,
}

impl AppState {
    pub fn new(service: StudyService, model: Option<Params>, service_token: String) -> Self {
        Self {
            service: Mutex::new(service),
            model: model.map(Arc::new),
            service_token,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        let incident = uuid::Uuid::new_v4();
        log::error!("incident {incident}: {message}");
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("internal error, incident {incident}"),
        )
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = match &e {
            StudyError::Argument(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StudyError::Auth(_) => StatusCode::UNAUTHORIZED,
            StudyError::NotFound(_) => StatusCode::NOT_FOUND,
            StudyError::Conflict(_) | StudyError::EmptyReport => StatusCode::CONFLICT,
            StudyError::Storage(_) | StudyError::Corrupt(_) => return Self::internal(e),
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bearer(headers: &HeaderMap) -> ApiResult<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing bearer token"))
}

fn service_auth(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    if bearer(headers)? != state.service_token {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "bad service token"));
    }
    Ok(())
}

/// Parses a JSON body; any schema problem is a 422.
fn body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
}

fn lock(state: &AppState) -> ApiResult<std::sync::MutexGuard<'_, StudyService>> {
    state
        .service
        .lock()
        .map_err(|_| ApiError::internal("study service lock poisoned"))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyzeRequest {
    record_id: String,
    sampling_rate_hz: f64,
    lead: String,
    samples_uv: Vec<f64>,
}

async fn analyze(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<Response> {
    service_auth(&state, &headers)?;
    let req: AnalyzeRequest = body(&bytes)?;
    if req.lead != "I" {
        return Err(ApiError::unprocessable(format!(
            "lead must be \"I\", got {:?}",
            req.lead
        )));
    }
    if !(req.sampling_rate_hz.is_finite() && req.sampling_rate_hz > 0.0) {
        return Err(ApiError::unprocessable("sampling_rate_hz must be positive"));
    }
    if req.samples_uv.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::unprocessable("samples_uv must be finite"));
    }
    let segment = Segment::whole(LeadSignal {
        record_id: req.record_id.clone(),
        lead_name: req.lead,
        sampling_rate_hz: req.sampling_rate_hz,
        samples: req.samples_uv,
        reference_label: None,
    })
    .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let params = state
        .model
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let p = blocking(move || {
        Pipeline::new(&params.config)
            .predict(&params, &segment)
            .map_err(ApiError::internal)
    })
    .await?;
    let probabilities: serde_json::Map<String, serde_json::Value> = MODEL_CLASSES
        .iter()
        .zip(p.probabilities)
        .map(|(l, v)| (l.to_string(), json!(v)))
        .collect();
    Ok(Json(json!({
        "record_id": req.record_id,
        "class": p.predicted_class,
        "probabilities": probabilities,
        "model_version": p.model_version,
    }))
    .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    manifest_path: PathBuf,
    raters: Vec<String>,
    #[serde(default)]
    seed: u64,
    study_id: Option<String>,
}

async fn create_study(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<Response> {
    service_auth(&state, &headers)?;
    let req: CreateRequest = body(&bytes)?;
    let created = blocking(move || {
        let manifest = load_manifest(&req.manifest_path)
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let items = items_from_manifest(&manifest)?;
        Ok(lock(&state)?.create_study(NewStudy {
            study_id: req.study_id,
            seed: req.seed,
            raters: req.raters,
            items,
        })?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn next_item(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    let next = lock(&state)?.next_item(&id, token)?;
    Ok(Json(next).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRequest {
    item_id: String,
    label: String,
}

async fn annotate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<Response> {
    let token = bearer(&headers)?.to_string();
    let req: AnnotationRequest = body(&bytes)?;
    let ack = blocking(move || {
        Ok(lock(&state)?.submit_annotation(&id, &token, &req.item_id, &req.label)?)
    })
    .await?;
    Ok(Json(ack).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UnlockRequest {
    rater_id: String,
    item_id: String,
    reason: String,
}

async fn unlock(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<Response> {
    let token = bearer(&headers)?.to_string();
    let req: UnlockRequest = body(&bytes)?;
    let seq = blocking(move || {
        Ok(lock(&state)?.unlock(&id, &token, &req.rater_id, &req.item_id, &req.reason)?)
    })
    .await?;
    Ok(Json(json!({ "seq": seq })).into_response())
}

async fn model_run(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let token = bearer(&headers)?.to_string();
    lock(&state)?.check_admin(&id, &token)?;
    let params = state
        .model
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let summary = blocking(move || Ok(lock(&state)?.run_model(&id, &token, &params)?)).await?;
    Ok(Json(summary).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn report(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    let report = lock(&state)?.report(&id, token)?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("markdown") => Ok((
            [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
            report.to_markdown(),
        )
            .into_response()),
        Some(other) => Err(ApiError::unprocessable(format!("unknown format {other:?}"))),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/analyze", post(analyze))
        .route("/api/studies", post(create_study))
        .route("/api/studies/{id}/next", get(next_item))
        .route("/api/studies/{id}/annotations", post(annotate))
        .route("/api/studies/{id}/unlock", post(unlock))
        .route("/api/studies/{id}/model-run", post(model_run))
        .route("/api/studies/{id}/report", get(report))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
