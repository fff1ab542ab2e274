//! HTTP/JSON routes over a [`Service`].
//!
//! | route | result |
//! |---|---|
//! | `POST /api/jobs` `{url, ref?}` | 202 `{job_id, created, job}` |
//! | `GET /api/jobs` | all jobs |
//! | `GET /api/jobs/{id}` | the job |
//! | `GET /api/jobs/{id}/report` | report document |
//! | `GET /api/jobs/{id}/provenance.ttl` | repository graph |
//! | `GET /api/jobs/{id}/notebooks/{index}/prov.ttl` | notebook graph |
//! | `GET /api/jobs/{id}/notebooks/{index}/binder` | 302 to Binder |
//!
//! Errors are `{code, message}` with a matching status.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::job::Job;
use crate::service::{Service, ServiceError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub url: String,
    #[serde(rename = "ref", default)]
    pub git_ref: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: String,
    pub created: bool,
    pub job: Job,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::InvalidUrl(_) | ServiceError::UnsupportedHost(_) | ServiceError::InvalidRequest(_) => {
            StatusCode::BAD_REQUEST
        }
        ServiceError::JobNotFound(_) | ServiceError::NotebookNotFound { .. } | ServiceError::NotAvailable(_) => {
            StatusCode::NOT_FOUND
        }
        ServiceError::JobNotFinished { .. } => StatusCode::CONFLICT,
        ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.0.code().to_string(),
            message: self.0.to_string(),
        };
        (status_of(&self.0), Json(body)).into_response()
    }
}

type Shared = State<Arc<Service>>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

async fn submit(State(service): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: SubmitRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::InvalidRequest(format!("expected {{\"url\": ..., \"ref\": ...}}: {e}")))?;
    let (job, created) = blocking(move || service.submit(&req.url, req.git_ref.as_deref())).await?;
    let body = SubmitResponse {
        job_id: job.job_id.clone(),
        created,
        job,
    };
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn list(State(service): Shared) -> Json<Vec<Job>> {
    Json(service.jobs())
}

async fn status(State(service): Shared, Path(id): Path<String>) -> Result<Json<Job>, ApiError> {
    Ok(Json(service.status(&id)?))
}

async fn report(State(service): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = blocking(move || service.report_bytes(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

const TURTLE: &str = "text/turtle; charset=utf-8";

async fn repository_provenance(State(service): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = blocking(move || service.repository_provenance(&id)).await?;
    Ok(([(header::CONTENT_TYPE, TURTLE)], bytes).into_response())
}

async fn notebook_provenance(
    State(service): Shared,
    Path((id, index)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    let bytes = blocking(move || service.notebook_provenance(&id, index)).await?;
    Ok(([(header::CONTENT_TYPE, TURTLE)], bytes).into_response())
}

async fn binder(State(service): Shared, Path((id, index)): Path<(String, usize)>) -> Result<Response, ApiError> {
    let url = blocking(move || service.binder_url(&id, index)).await?;
    Ok((StatusCode::FOUND, [(header::LOCATION, url)]).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn not_found() -> ApiError {
    ApiError(ServiceError::NotAvailable("no such route".into()))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/jobs", get(list).post(submit))
        .route("/api/jobs/{id}", get(status))
        .route("/api/jobs/{id}/report", get(report))
        .route("/api/jobs/{id}/provenance.ttl", get(repository_provenance))
        .route("/api/jobs/{id}/notebooks/{index}/prov.ttl", get(notebook_provenance))
        .route("/api/jobs/{id}/notebooks/{index}/binder", get(binder))
        .fallback(not_found)
        .with_state(service)
}
