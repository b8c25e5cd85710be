use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use super::session::{Axis, CreateSession, SessionStore, ShotInput};
use crate::error::Error;

/// JSON error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::SessionNotFound(_) | Error::DatasetNotFound(_) => StatusCode::NOT_FOUND,
        Error::StaleWrite { .. } => StatusCode::CONFLICT,
        Error::Validation { .. } | Error::Range(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Schema(_) | Error::Json(_) | Error::Config(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct Failure(Error);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e)
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let e = self.0;
        let field = match &e {
            Error::Validation { field, .. } => Some(field.clone()),
            _ => None,
        };
        let body = ApiError {
            code: e.code().into(),
            field,
            message: match &e {
                Error::Validation { message, .. } => message.clone(),
                other => other.to_string(),
            },
        };
        (status_of(&e), Json(body)).into_response()
    }
}

type Reply<T> = Result<Json<T>, Failure>;

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, Error> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| Error::Schema(format!("request body: {e}")))
}

/// Run blocking session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, Failure> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure(Error::NumericalFailure(format!("worker failed: {e}"))))?
        .map_err(Failure)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalBody {
    target_beta_n: Option<f64>,
    alpha: Option<f64>,
}

async fn create_session(State(store): State<Arc<SessionStore>>, body: Bytes) -> Result<Response, Failure> {
    let req: CreateSession = parse_body(&body)?;
    let summary = blocking(move || store.create(req)).await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_session(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Reply<super::SessionSummary> {
    Ok(Json(store.summary(&id)?))
}

async fn propose(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Reply<super::ProposalResponse> {
    let b: ProposalBody = parse_body(&body)?;
    let target = b.target_beta_n.ok_or_else(|| Error::validation("target_beta_n", "required"))?;
    Ok(Json(blocking(move || store.propose(&id, target, b.alpha)).await?))
}

async fn record_shot(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Reply<super::RecordResponse> {
    let input: ShotInput = parse_body(&body)?;
    Ok(Json(blocking(move || store.record(&id, &input)).await?))
}

fn query_f64(q: &HashMap<String, String>, field: &str) -> Result<Option<f64>, Error> {
    q.get(field)
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::validation(field, format!("`{v}` is not a number"))))
        .transpose()
}

async fn surface(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Reply<super::Surface> {
    let Query(q) = query.map_err(|e| Error::Schema(format!("query string: {e}")))?;
    let beta = query_f64(&q, "beta_n")?.ok_or_else(|| Error::validation("beta_n", "required"))?;
    let axes_raw = q.get("axes").map_or("mu,sigma", String::as_str);
    let parts: Vec<&str> = axes_raw.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::validation("axes", "expected two comma-separated axes").into());
    }
    let axes = [Axis::parse(parts[0])?, Axis::parse(parts[1])?];
    let fixed = query_f64(&q, "fixed")?;
    Ok(Json(blocking(move || store.surface(&id, beta, axes, fixed)).await?))
}

async fn history(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Reply<super::HistoryResponse> {
    Ok(Json(store.history(&id)?))
}

/// The JSON API, plus static files from `static_dir` at `/` when given.
pub fn router(store: Arc<SessionStore>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/proposals", post(propose))
        .route("/sessions/{id}/shots", post(record_shot))
        .route("/sessions/{id}/surface", get(surface))
        .route("/sessions/{id}/history", get(history))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(store: Arc<SessionStore>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "shot service listening");
    axum::serve(listener, router(store, static_dir)).await
}
