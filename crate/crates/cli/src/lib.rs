//! HTTP front end of the session service.
//!
//! Routes (all bodies JSON):
//!
//! | method | path | body | reply |
//! |--------|------|------|-------|
//! | POST | /sessions | | 201 `{id}` |
//! | POST | /sessions/:id/load | `{source}` or `{image}` | `{cells, symbols}` |
//! | POST | /sessions/:id/step | | step report |
//! | POST | /sessions/:id/run | `{max_steps?}` | run report |
//! | POST | /sessions/:id/input | `{value}` | 204 |
//! | GET | /sessions/:id/state | | `{id, mode, state, occurrences, fault?}` |
//! | GET | /sessions/:id/export/:what?format=json\|dot | | artifact text |
//! | GET | /sessions/:id/events | | server-sent push stream |
//!
//! Push events carry `{type, payload}` with `type` one of `delta`,
//! `occurrence` or `mode`; the SSE event name repeats the type. A `lagged`
//! event means messages were dropped and the client should refetch state.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex, PoisonError};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tm_lmc::lmc::{export_artifact, Artifact};
use tm_lmc::model::ExportFormat;
use tm_lmc::session::{
    LoadRequest, LoadSummary, PushMessage, PushSink, RunReport, SessionConfig, SessionError, SessionManager,
    SessionView, StepReport,
};
use tokio::sync::broadcast;
use tokio_stream::wrappers::errors::BroadcastStreamRecvError;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::StreamExt;

/// Steps granted to a run request that names no limit.
pub const DEFAULT_RUN_STEPS: u64 = 10_000;
const CHANNEL_CAPACITY: usize = 4096;

type Channels = Arc<Mutex<HashMap<String, broadcast::Sender<(&'static str, String)>>>>;

/// Session manager plus one broadcast channel per subscribed session.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<SessionManager>,
    channels: Channels,
}

impl AppState {
    pub fn new(config: SessionConfig) -> Self {
        let channels: Channels = Arc::default();
        let c = channels.clone();
        let sink: PushSink = Arc::new(move |id: &str, msg: &PushMessage| {
            let kind = match msg {
                PushMessage::Delta(_) => "delta",
                PushMessage::Occurrence(_) => "occurrence",
                PushMessage::Mode(_) => "mode",
            };
            let map = c.lock().unwrap_or_else(PoisonError::into_inner);
            if let Some(tx) = map.get(id) {
                let text = serde_json::to_string(msg).expect("push messages serialize");
                // no receivers is fine: nobody is listening right now
                let _ = tx.send((kind, text));
            }
        });
        AppState { sessions: Arc::new(SessionManager::new(config, sink)), channels }
    }

    pub fn sessions(&self) -> &SessionManager {
        &self.sessions
    }

    fn subscribe(&self, id: &str) -> broadcast::Receiver<(&'static str, String)> {
        let mut map = self.channels.lock().unwrap_or_else(PoisonError::into_inner);
        map.retain(|_, tx| tx.receiver_count() > 0);
        map.entry(id.to_string()).or_insert_with(|| broadcast::channel(CHANNEL_CAPACITY).0).subscribe()
    }
}

#[derive(Debug)]
pub enum ApiError {
    Session(SessionError),
    BadRequest(String),
    NotFound(String),
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Session(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match &self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({"error": m})),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({"error": m})),
            ApiError::Session(e) => {
                let status = match e {
                    SessionError::UnknownSession => StatusCode::NOT_FOUND,
                    SessionError::CapReached { .. } => StatusCode::TOO_MANY_REQUESTS,
                    SessionError::BadMode(_) => StatusCode::CONFLICT,
                    SessionError::BadLoadRequest => StatusCode::BAD_REQUEST,
                    SessionError::InputOutOfRange(_) | SessionError::Assembly(_) | SessionError::Image(_) => {
                        StatusCode::UNPROCESSABLE_ENTITY
                    }
                };
                let mut body = json!({"error": e.to_string()});
                if let SessionError::Assembly(d) = e {
                    body["diagnostics"] = json!(d);
                }
                (status, body)
            }
        };
        let mut resp = (status, Json(body)).into_response();
        if let ApiError::Session(SessionError::CapReached { retry_after_secs, .. }) = self {
            resp.headers_mut().insert(header::RETRY_AFTER, retry_after_secs.into());
        }
        resp
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/:id/load", post(load))
        .route("/sessions/:id/step", post(step))
        .route("/sessions/:id/run", post(run))
        .route("/sessions/:id/input", post(input))
        .route("/sessions/:id/state", get(state))
        .route("/sessions/:id/export/:what", get(export))
        .route("/sessions/:id/events", get(events))
        .with_state(app)
}

async fn create(State(app): State<AppState>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let id = app.sessions.create()?;
    Ok((StatusCode::CREATED, Json(json!({"id": id}))))
}

async fn load(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<LoadRequest>,
) -> ApiResult<Json<LoadSummary>> {
    Ok(Json(app.sessions.load(&id, &req)?))
}

async fn step(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StepReport>> {
    Ok(Json(app.sessions.step(&id)?))
}

#[derive(Debug, Default, Deserialize)]
struct RunBody {
    max_steps: Option<u64>,
}

async fn run(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<RunBody>>,
) -> ApiResult<Json<RunReport>> {
    let max = body.and_then(|b| b.0.max_steps).unwrap_or(DEFAULT_RUN_STEPS);
    // runs lock the session per instruction; keep them off the async workers
    let report = tokio::task::spawn_blocking(move || app.sessions.run(&id, max))
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))??;
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
struct InputBody {
    value: i64,
}

async fn input(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<InputBody>,
) -> ApiResult<StatusCode> {
    app.sessions.provide_input(&id, body.value)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn state(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(app.sessions.state(&id)?))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(app): State<AppState>,
    Path((id, what)): Path<(String, String)>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    app.sessions.state(&id)?;
    let what: Artifact = what.parse().map_err(ApiError::NotFound)?;
    let format: ExportFormat = q.format.as_deref().unwrap_or("json").parse().map_err(ApiError::BadRequest)?;
    let mime = match format {
        ExportFormat::Json => "application/json",
        ExportFormat::Dot => "text/vnd.graphviz",
    };
    Ok(([(header::CONTENT_TYPE, mime)], export_artifact(what, format)).into_response())
}

async fn events(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    app.sessions.state(&id)?;
    let stream = BroadcastStream::new(app.subscribe(&id)).map(|m| {
        Ok(match m {
            Ok((kind, text)) => Event::default().event(kind).data(text),
            Err(BroadcastStreamRecvError::Lagged(n)) => Event::default().event("lagged").data(n.to_string()),
        })
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, config: SessionConfig) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(config))).await
}
