//! HTTP front end for [`SessionManager`].
//!
//! | Route | Body | Reply |
//! |---|---|---|
//! | `PUT /sessions` | [`CreateSession`] | 201, [`CreatedSession`] |
//! | `POST /sessions/{id}/advance` | [`AdvanceRequest`] | [`SessionView`] |
//! | `POST /sessions/{id}/expert-action` | [`ExpertActionBody`] | [`SessionView`] |
//! | `GET /sessions/{id}` | | [`SessionView`] |
//! | `GET /sessions/{id}/events` | | event stream of [`SessionEvent`] |
//!
//! Errors come back as [`ErrorBody`]. The event stream opens with a snapshot
//! and then relays every event of the session; clients order by `seq`.

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use hitl_core::expert::WIRE_VERSION;
use hitl_core::service::{
    AdvanceRequest, CreateSession, CreatedSession, ExpertActionBody, SessionEvent, SessionManager, SessionView, Update,
};
use hitl_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

/// Events buffered per subscriber before a slow reader starts missing some.
const EVENT_BUFFER: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub version: u32,
    pub kind: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::Validation(_) | Error::Parse { .. } | Error::Format { .. } => {
                (StatusCode::BAD_REQUEST, "validation")
            }
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                (StatusCode::NOT_FOUND, "not_found")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = ErrorBody { version: WIRE_VERSION, kind: kind.into(), message: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

/// Sessions plus one broadcast channel per session for its event stream.
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<SessionManager>,
    channels: Arc<Mutex<HashMap<String, broadcast::Sender<SessionEvent>>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sessions(&self) -> &SessionManager {
        &self.sessions
    }

    fn channel(&self, id: &str) -> broadcast::Sender<SessionEvent> {
        let mut channels = self.channels.lock().expect("channel registry poisoned");
        channels.entry(id.to_string()).or_insert_with(|| broadcast::channel(EVENT_BUFFER).0).clone()
    }

    fn publish(&self, id: &str, update: Update) -> SessionView {
        let tx = self.channel(id);
        for event in update.events {
            // No subscribers is not an error.
            let _ = tx.send(event);
        }
        update.view
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(Error::Validation(format!("request body: {e}"))))
}

async fn create_session(
    State(app): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let request: CreateSession = parse(&body)?;
    let created = request.open(&app.sessions)?;
    app.channel(&created.id);
    Ok((StatusCode::CREATED, Json(created)))
}

async fn advance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let request: AdvanceRequest = parse(&body)?;
    let update = request.submit(&app.sessions, &id)?;
    Ok(Json(app.publish(&id, update)))
}

async fn expert_action(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let request: ExpertActionBody = parse(&body)?;
    let update = request.submit(&app.sessions, &id)?;
    Ok(Json(app.publish(&id, update)))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(app.sessions.get(&id)?))
}

fn to_sse(event: &SessionEvent) -> Result<Event, Infallible> {
    let name = serde_json::to_value(event.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    let data = serde_json::to_string(event).expect("events serialise to JSON");
    Ok(Event::default().event(name).id(event.seq.to_string()).data(data))
}

async fn events(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    // Subscribe before taking the snapshot so nothing falls between them.
    let rx = app.channel(&id).subscribe();
    let snapshot = app.sessions.snapshot(&id)?;
    let after = snapshot.seq;
    let live = BroadcastStream::new(rx).filter_map(move |e| e.ok().filter(|e| e.seq > after));
    let stream = tokio_stream::once(snapshot).chain(live).map(|e| to_sse(&e));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", put(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/expert-action", post(expert_action))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new())).await
}
