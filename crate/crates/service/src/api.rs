use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::state::{RetrainRequest, Service, StatusFilter, DEFAULT_PAGE_SIZE};
use crate::{ServiceError, VerdictRequest};

#[derive(Serialize)]
struct ErrorBody<'a> {
    error_code: &'a str,
    message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error_code: self.code(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

type Shared = State<Arc<Service>>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/articles/{id}", get(article))
        .route("/api/verdicts", post(verdict))
        .route("/api/retrain", post(retrain))
        .route("/api/metrics", get(metrics))
        .with_state(service)
}

pub async fn serve(listener: tokio::net::TcpListener, service: Arc<Service>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

fn parse_body<T: DeserializeOwned + Default>(body: &[u8], allow_empty: bool) -> Result<T, ServiceError> {
    if allow_empty && body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidRequest(format!("bad request body: {e}")))
}

fn number(q: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ServiceError> {
    q.get(key).map_or(Ok(default), |v| {
        v.parse()
            .map_err(|_| ServiceError::InvalidRequest(format!("{key} must be a positive integer, got {v:?}")))
    })
}

/// Runs blocking work (fsync, training) off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn queue(State(s): Shared, Query(q): Query<HashMap<String, String>>) -> Result<Response, ServiceError> {
    let filter = q.get("status").map_or(Ok(StatusFilter::default()), |v| v.parse())?;
    let page = number(&q, "page", 1)?;
    let size = number(&q, "size", DEFAULT_PAGE_SIZE)?;
    Ok(Json(s.list_articles(filter, page, size)?).into_response())
}

async fn article(State(s): Shared, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(s.article_detail(&id)?).into_response())
}

async fn verdict(State(s): Shared, body: Bytes) -> Result<Response, ServiceError> {
    let request: VerdictRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::InvalidRequest(format!("bad verdict: {e}")))?;
    let ack = blocking(move || s.submit_verdict(request)).await?;
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

async fn retrain(State(s): Shared, body: Bytes) -> Result<Response, ServiceError> {
    let request: RetrainRequest = parse_body(&body, true)?;
    let outcome = blocking(move || s.retrain(&request)).await?;
    Ok(Json(outcome).into_response())
}

async fn metrics(State(s): Shared) -> Response {
    Json(s.metrics()).into_response()
}
