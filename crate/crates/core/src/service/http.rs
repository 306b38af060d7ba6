//! JSON endpoints over a [`VerificationSession`].
//!
//! ```text
//! GET  /api/queue?limit=N
//! GET  /api/retrieve?query=<c:t:f | c:t>&k=N
//! POST /api/verify            {"query":"1:42","gallery":"2:17","status":"confirmed","annotator":"ab"}
//! GET  /api/evaluate?mode=test|val
//! GET  /api/models
//! GET  /api/image?sample=c:t:f
//! ```
//!
//! Errors come back as `{"error": <kind>, "message": <text>}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use super::{ServiceError, VerificationSession, VerifyRequest};
use crate::eval::EvalMode;

type Shared = Arc<VerificationSession>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ServiceError::UnknownQuery(_) => (StatusCode::NOT_FOUND, "unknown_query"),
            ServiceError::UnknownTrajectory(_) => (StatusCode::NOT_FOUND, "unknown_trajectory"),
            ServiceError::GalleryNotBuilt(_) => (StatusCode::CONFLICT, "gallery_not_built"),
            ServiceError::NoVerifiedMatches => (StatusCode::CONFLICT, "no_verified_matches"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = serde_json::json!({ "error": kind, "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
struct QueueParams {
    limit: Option<usize>,
}

#[derive(Deserialize)]
struct RetrieveParams {
    query: String,
    k: Option<usize>,
}

#[derive(Deserialize)]
struct EvaluateParams {
    mode: Option<String>,
}

#[derive(Deserialize)]
struct ImageParams {
    sample: String,
}

async fn queue(State(s): State<Shared>, Query(p): Query<QueueParams>) -> impl IntoResponse {
    Json(s.queue(p.limit.unwrap_or(50)))
}

async fn retrieve(
    State(s): State<Shared>,
    Query(p): Query<RetrieveParams>,
) -> Result<impl IntoResponse, ServiceError> {
    let k = p.k.unwrap_or(10);
    let result = tokio::task::spawn_blocking(move || s.retrieve(&p.query, k))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(result))
}

async fn verify(
    State(s): State<Shared>,
    body: Result<Json<VerifyRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let record = tokio::task::spawn_blocking(move || s.record_verification(req))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn evaluate(
    State(s): State<Shared>,
    Query(p): Query<EvaluateParams>,
) -> Result<impl IntoResponse, ServiceError> {
    let mode: EvalMode = p
        .mode
        .as_deref()
        .unwrap_or("test")
        .parse()
        .map_err(ServiceError::BadRequest)?;
    let snapshot = tokio::task::spawn_blocking(move || s.evaluation_snapshot(mode))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(snapshot))
}

async fn models(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.models())
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn image(
    State(s): State<Shared>,
    Query(p): Query<ImageParams>,
) -> Result<impl IntoResponse, ServiceError> {
    let path = s.image_path(&p.sample)?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ServiceError::NotFound(format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes))
}

pub fn router(session: Arc<VerificationSession>) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/retrieve", get(retrieve))
        .route("/api/verify", post(verify))
        .route("/api/evaluate", get(evaluate))
        .route("/api/models", get(models))
        .route("/api/image", get(image))
        .with_state(session)
}

/// Serves until the process is stopped.
pub async fn serve(session: Arc<VerificationSession>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(session)).await
}
