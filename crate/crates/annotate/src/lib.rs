//! JSON-over-HTTP front end for an [`AnnotationService`].
//!
//! Routes:
//! - `GET /api/tasks/next?annotator=ID&mode=score|filter`
//! - `POST /api/submit` with `{"annotator_id", "task_id", "payload", "mode"?}`
//! - `GET /api/agreement`
//! - `POST /api/export` (writes to the path fixed at startup)
//! - everything else: static assets for the browser client

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use vqaeval::annotation::{AnnotationError, AnnotationService, Mode, Payload, Progress, TaskView};

const FALLBACK_INDEX: &str = include_str!("../assets/index.html");

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Where `POST /api/export` writes. Clients cannot choose the path.
    pub export_path: PathBuf,
    /// Directory holding the browser bundle; a placeholder page otherwise.
    pub static_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    service: Arc<AnnotationService>,
    export_path: Arc<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextQuery {
    pub annotator: String,
    pub mode: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextResponse {
    /// `null` once this annotator has nothing left in the mode.
    pub task: Option<TaskView>,
    pub progress: Progress,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub annotator_id: String,
    pub task_id: u64,
    pub payload: serde_json::Value,
    /// Optional; when given it must match the task's mode.
    #[serde(default)]
    pub mode: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct ApiError(StatusCode, String);

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let status = match &e {
            AnnotationError::UnknownAnnotator(_) | AnnotationError::UnknownTask(_) => StatusCode::NOT_FOUND,
            AnnotationError::UnknownMode(_)
            | AnnotationError::InvalidPayload(_)
            | AnnotationError::ModeMismatch { .. } => StatusCode::BAD_REQUEST,
            AnnotationError::IncompleteTasks(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, AnnotationError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn next_task(State(st): State<AppState>, Query(q): Query<NextQuery>) -> Result<Json<NextResponse>, ApiError> {
    let mode: Mode = q.mode.parse()?;
    let snap = st.service.snapshot();
    let task = snap.next_task(&q.annotator, mode)?;
    Ok(Json(NextResponse {
        task,
        progress: snap.progress(),
    }))
}

async fn submit(State(st): State<AppState>, Json(req): Json<SubmitRequest>) -> Result<Response, ApiError> {
    let task_mode = st.service.snapshot().task(req.task_id)?.mode;
    if let Some(claimed) = &req.mode {
        let claimed: Mode = claimed.parse()?;
        if claimed != task_mode {
            return Err(AnnotationError::ModeMismatch {
                task_id: req.task_id,
                actual: task_mode,
                claimed,
            }
            .into());
        }
    }
    let payload = Payload::from_json(&req.payload, task_mode)?;
    let service = st.service.clone();
    let ack = blocking(move || service.submit(&req.annotator_id, req.task_id, payload)).await?;
    Ok(Json(ack).into_response())
}

async fn agreement(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.service.agreement())
}

async fn export(State(st): State<AppState>) -> Result<Response, ApiError> {
    let service = st.service.clone();
    let path = st.export_path.clone();
    let summary = blocking(move || service.export(path.as_path())).await?;
    Ok(Json(summary).into_response())
}

pub fn router(service: Arc<AnnotationService>, cfg: ServerConfig) -> Router {
    let state = AppState {
        service,
        export_path: Arc::new(cfg.export_path),
    };
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/submit", post(submit))
        .route("/api/agreement", get(agreement))
        .route("/api/export", post(export))
        .with_state(state);
    match cfg.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(FALLBACK_INDEX) })),
    }
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}
