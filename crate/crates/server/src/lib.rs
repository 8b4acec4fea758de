//! HTTP surface of the session service.
//!
//! JSON endpoints cover the session lifecycle, batched move ingestion,
//! viewport updates, pipeline runs and read-only views of the latest state.
//! Finished runs are announced on a per-session server-sent event stream.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use hoverscope::geometry::{GeometryError, MovePoint, ViewportRef};
use hoverscope::highlight::HighlightError;
use hoverscope::idr::IdrSet;
use hoverscope::session::{PipelineResult, RunStats, SessionConfig, SessionError, SessionId, SessionManager};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{0}")]
    BadRequest(String),
    #[error("pipeline task failed: {0}")]
    Join(#[from] tokio::task::JoinError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::Session(e) => match e {
                SessionError::UnknownSession(_) | SessionError::UnknownDataset(_) => StatusCode::NOT_FOUND,
                SessionError::InvalidConfig(_)
                | SessionError::Geometry(GeometryError::InvalidViewport(_) | GeometryError::PoleSingularity { .. })
                | SessionError::Highlight(HighlightError::InvalidK) => StatusCode::UNPROCESSABLE_ENTITY,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Join(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Pushed to subscribers whenever a run finishes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEvent {
    pub session_id: SessionId,
    pub run: u64,
    pub t_c: u64,
    pub stats: RunStats,
    pub highlight_ids: Vec<u64>,
    pub automatic: bool,
}

impl ResultEvent {
    fn new(session_id: SessionId, r: &PipelineResult, automatic: bool) -> Self {
        ResultEvent {
            session_id,
            run: r.run,
            t_c: r.t_c,
            stats: r.stats,
            highlight_ids: r.highlights.points.iter().map(|p| p.id.0).collect(),
            automatic,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub manager: Arc<SessionManager>,
    pub events: broadcast::Sender<ResultEvent>,
}

impl AppState {
    pub fn new(manager: SessionManager) -> Self {
        let (events, _) = broadcast::channel(256);
        AppState { manager: Arc::new(manager), events }
    }

    /// Runs the pipeline off the async executor and announces the result.
    pub async fn run(&self, id: SessionId, automatic: bool) -> ApiResult<Arc<PipelineResult>> {
        let handle = self.manager.get(id)?;
        let result = tokio::task::spawn_blocking(move || handle.run()).await??;
        // no subscribers is fine
        let _ = self.events.send(ResultEvent::new(id, &result, automatic));
        Ok(result)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/moves", post(post_moves))
        .route("/sessions/{id}/viewport", put(put_viewport))
        .route("/sessions/{id}/run", post(run_pipeline))
        .route("/sessions/{id}/idrs", get(get_idrs))
        .route("/sessions/{id}/highlights", get(get_highlights))
        .route("/sessions/{id}/feedback", get(get_feedback))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

async fn list_datasets(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "datasets": s.manager.datasets() }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub dataset_id: String,
    #[serde(default)]
    pub viewport: Option<ViewportRef>,
    /// Partial overrides; missing fields keep their defaults.
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

async fn create_session(State(s): State<AppState>, Json(body): Json<CreateSession>) -> ApiResult<impl IntoResponse> {
    let config = body.config.unwrap_or_default();
    let id = s.manager.create(&body.dataset_id, body.viewport, config)?;
    let viewport = s.manager.get(id)?.lock().viewport();
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id, "viewport": viewport, "config": config }))))
}

async fn delete_session(State(s): State<AppState>, Path(id): Path<SessionId>) -> ApiResult<StatusCode> {
    s.manager.remove(id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MovesBody {
    One(MovePoint),
    Many(Vec<MovePoint>),
    Wrapped { moves: Vec<MovePoint> },
}

async fn post_moves(
    State(s): State<AppState>,
    Path(id): Path<SessionId>,
    Json(body): Json<MovesBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let moves = match body {
        MovesBody::One(m) => vec![m],
        MovesBody::Many(v) | MovesBody::Wrapped { moves: v } => v,
    };
    let accepted = s.manager.ingest_moves(id, &moves)?;
    Ok(Json(json!({ "accepted_count": accepted, "received": moves.len() })))
}

async fn put_viewport(
    State(s): State<AppState>,
    Path(id): Path<SessionId>,
    Json(viewport): Json<ViewportRef>,
) -> ApiResult<Json<ViewportRef>> {
    let handle = s.manager.get(id)?;
    let mut session = handle.lock();
    session.update_viewport(viewport)?;
    Ok(Json(session.viewport()))
}

async fn run_pipeline(State(s): State<AppState>, Path(id): Path<SessionId>) -> ApiResult<Response> {
    let result = s.run(id, false).await?;
    Ok(Json(result.as_ref()).into_response())
}

async fn get_idrs(State(s): State<AppState>, Path(id): Path<SessionId>) -> ApiResult<Response> {
    let handle = s.manager.get(id)?;
    let session = handle.lock();
    Ok(match session.latest() {
        Some(r) => Json(&r.idrs).into_response(),
        None => {
            let empty = IdrSet::empty(0, session.config().g);
            let doc = empty.document(&session.viewport()).map_err(SessionError::from)?;
            Json(doc).into_response()
        }
    })
}

#[derive(Debug, Deserialize)]
pub struct HighlightQuery {
    pub k: Option<String>,
}

async fn get_highlights(
    State(s): State<AppState>,
    Path(id): Path<SessionId>,
    Query(q): Query<HighlightQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let k = match q.k.as_deref() {
        None | Some("") => None,
        Some(v) => Some(v.parse::<usize>().map_err(|_| ApiError::BadRequest(format!("invalid k {v:?}")))?),
    };
    let handle = s.manager.get(id)?;
    let (doc, warnings) = tokio::task::spawn_blocking(move || handle.lock().highlights(k)).await??;
    Ok(Json(json!({ "highlights": doc, "warnings": warnings })))
}

async fn get_feedback(State(s): State<AppState>, Path(id): Path<SessionId>) -> ApiResult<Json<serde_json::Value>> {
    let handle = s.manager.get(id)?;
    let session = handle.lock();
    let snapshot = session.feedback().snapshot(session.engine().dataset.schema());
    Ok(Json(json!({ "runs": session.runs(), "feedback": snapshot })))
}

async fn events(
    State(s): State<AppState>,
    Path(id): Path<SessionId>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    s.manager.get(id)?;
    let rx = s.events.subscribe();
    let stream = stream::unfold(rx, move |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) if ev.session_id == id => {
                    let event = Event::default().event("result").json_data(&ev).expect("event serializes");
                    return Some((Ok(event), rx));
                }
                Ok(_) | Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

/// Periodically runs sessions that received moves and whose auto-run period
/// has passed since their last run.
pub fn spawn_auto_runner(state: AppState, tick: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            interval.tick().await;
            for id in state.manager.ids() {
                let Ok(handle) = state.manager.get(id) else { continue };
                let due = {
                    let s = handle.lock();
                    match s.config().auto_run_ms {
                        Some(period) if s.has_new_moves() => {
                            let last = s.latest().map_or(0, |r| r.t_c);
                            handle.elapsed_ms().saturating_sub(last) >= period
                        }
                        _ => false,
                    }
                };
                if due {
                    if let Err(e) = state.run(id, true).await {
                        eprintln!("auto-run of session {id} failed: {e}");
                    }
                }
            }
        }
    })
}
