use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use hitl_cli::server::{router, AppState, ErrorBody};
use hitl_core::agent::{Outcome, Source};
use hitl_core::env::{obs_key, Observation};
use hitl_core::expert::{plan_optimal, WIRE_VERSION};
use hitl_core::learner::{MUpdateMode, TableFile, TableMeta};
use hitl_core::service::{EventKind, SessionEvent, SessionStatus, SessionView};
use hitl_core::{maps, EnvParams, GridWorld, ObservationMode, Pos, ValueTable};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const HIGH: f64 = 100.0;

/// Tables for trap_world whose greedy action is the expert's everywhere.
/// Every cell in `risky` gets variance `HIGH`; the rest get zero.
fn write_tables(dir: &Path, risky: &[Pos]) -> PathBuf {
    let world = GridWorld::new(maps::builtin("trap_world").unwrap(), EnvParams::default()).unwrap();
    let expert = plan_optimal(&world).unwrap();
    let (mut q, mut m) = (ValueTable::new(4, 0.0), ValueTable::new(4, 0.0));
    for p in world.map.free_cells() {
        let key = obs_key(&Observation::at(&world.map, p, ObservationMode::Full));
        let best = expert.expert_action(p).unwrap().ordinal();
        for a in 0..4 {
            let value = if a == best { 1.0 } else { 0.0 };
            let spread = if risky.contains(&p) { HIGH } else { 0.0 };
            q.insert(key, a, value, 1);
            m.insert(key, a, value * value + spread, 1);
        }
    }
    let file = TableFile {
        meta: TableMeta {
            map: "trap_world".into(),
            mode: ObservationMode::Full,
            gamma: 0.95,
            m_update_mode: MUpdateMode::Corrected,
            config_hash: "test".into(),
        },
        q,
        m,
    };
    let path = dir.join("trap_world.table");
    file.save(&path).unwrap();
    path
}

fn start() -> Pos {
    maps::builtin("trap_world").unwrap().start()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let body = body.map_or_else(Body::empty, |b| Body::from(b.to_string()));
    let request =
        Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, table: &Path, map: &str) -> (StatusCode, Value) {
    let body = json!({
        "version": WIRE_VERSION,
        "map": map,
        "table": table.to_str().unwrap(),
        "epsilon": 1.0,
        "seed": 7,
    });
    call(app, "PUT", "/sessions", Some(body)).await
}

async fn session(app: &Router, table: &Path) -> String {
    let (status, body) = create(app, table, "trap_world").await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

fn advance_body() -> Option<Value> {
    Some(json!({ "version": WIRE_VERSION }))
}

fn action_body(action: &str) -> Option<Value> {
    Some(json!({ "version": WIRE_VERSION, "action": action }))
}

fn view(value: Value) -> SessionView {
    serde_json::from_value(value).unwrap()
}

fn error_kind(value: Value) -> String {
    let body: ErrorBody = serde_json::from_value(value).unwrap();
    assert_eq!(body.version, WIRE_VERSION);
    body.kind
}

#[tokio::test]
async fn create_returns_versioned_id_and_running_view() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[]);
    let app = router(AppState::new());

    let (status, body) = create(&app, &table, "trap_world").await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["version"], json!(WIRE_VERSION));
    let id = body["id"].as_str().unwrap();

    let (status, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = view(body);
    assert_eq!(v.version, WIRE_VERSION);
    assert_eq!(v.status, SessionStatus::Running);
    assert_eq!(v.pos, start());
    assert_eq!(v.grid, maps::builtin("trap_world").unwrap().rows());
    assert_eq!(v.variance_map.len(), maps::builtin("trap_world").unwrap().free_cells().len());
    assert!(v.trace.is_empty() && v.pending_request.is_none());
}

#[tokio::test]
async fn two_creates_give_distinct_ids() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[]);
    let app = router(AppState::new());
    let a = session(&app, &table).await;
    let b = session(&app, &table).await;
    assert_ne!(a, b);
}

#[tokio::test]
async fn create_rejects_unknown_map_mismatched_tables_and_bad_bodies() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[]);
    let app = router(AppState::new());

    let (status, body) = create(&app, &table, "no_such_world").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_kind(body), "not_found");

    let (status, body) = create(&app, &table, "shortcut_world").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_kind(body), "validation");

    let (status, body) = create(&app, &dir.path().join("missing.table"), "trap_world").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_kind(body), "not_found");

    let stale = json!({ "version": WIRE_VERSION + 1, "map": "trap_world", "table": table, "epsilon": 1.0, "seed": 0 });
    let (status, body) = call(&app, "PUT", "/sessions", Some(stale)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_kind(body), "validation");

    let (status, body) = call(&app, "PUT", "/sessions", Some(json!({ "version": WIRE_VERSION }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_kind(body), "validation");
}

#[tokio::test]
async fn expert_round_trip_with_conflicts() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[start()]);
    let app = router(AppState::new());
    let id = session(&app, &table).await;
    let advance = format!("/sessions/{id}/advance");
    let submit = format!("/sessions/{id}/expert-action");

    // The start cell is risky, so the first decision pauses for the expert.
    let (status, body) = call(&app, "POST", &advance, advance_body()).await;
    assert_eq!(status, StatusCode::OK);
    let v = view(body);
    assert_eq!(v.status, SessionStatus::AwaitingExpert);
    assert_eq!(v.pos, start());
    assert!(v.trace.is_empty());
    let request = v.pending_request.unwrap();
    assert_eq!(request.version, WIRE_VERSION);
    assert_eq!(request.state, start());
    assert_eq!(request.variance, HIGH);
    assert_eq!(request.episode_id, id);

    let (status, body) = call(&app, "POST", &advance, advance_body()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_kind(body), "conflict");

    let (status, body) = call(&app, "POST", &submit, action_body("Sideways")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_kind(body), "validation");

    // The goal sits directly above the start.
    let (status, body) = call(&app, "POST", &submit, action_body("Up")).await;
    assert_eq!(status, StatusCode::OK);
    let v = view(body);
    assert_eq!(v.status, SessionStatus::Finished);
    assert_eq!(v.outcome, Some(Outcome::Goal));
    assert_eq!(v.expert_calls, 1);
    assert_eq!(v.trace.len(), 1);
    assert_eq!(v.trace[0].source, Source::Expert);
    assert!(v.pending_request.is_none());

    let (status, _) = call(&app, "POST", &submit, action_body("Up")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", &advance, advance_body()).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn submit_while_running_conflicts() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[]);
    let app = router(AppState::new());
    let id = session(&app, &table).await;
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/expert-action"), action_body("Up")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_kind(body), "conflict");
}

#[tokio::test]
async fn calm_state_takes_an_agent_step() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[]);
    let app = router(AppState::new());
    let id = session(&app, &table).await;
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/advance"), advance_body()).await;
    assert_eq!(status, StatusCode::OK);
    let v = view(body);
    assert_eq!(v.trace.len(), 1);
    assert_eq!(v.trace[0].source, Source::Agent);
    assert_eq!(v.trace[0].state, start());
    assert_eq!(v.expert_calls, 0);
}

#[tokio::test]
async fn advance_requires_current_version() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[]);
    let app = router(AppState::new());
    let id = session(&app, &table).await;
    let uri = format!("/sessions/{id}/advance");
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "version": 0 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", &uri, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert!(view(body).trace.is_empty(), "rejected requests must not move the episode");
}

#[tokio::test]
async fn unknown_session_is_not_found_everywhere() {
    let app = router(AppState::new());
    for (method, uri, body) in [
        ("GET", "/sessions/nope", None),
        ("GET", "/sessions/nope/events", None),
        ("POST", "/sessions/nope/advance", advance_body()),
        ("POST", "/sessions/nope/expert-action", action_body("Up")),
    ] {
        let (status, body) = call(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {uri}");
        assert_eq!(error_kind(body), "not_found");
    }
}

/// Reads server-sent events until `n` data lines have arrived.
async fn read_events(body: &mut Body, n: usize) -> Vec<SessionEvent> {
    let mut text = String::new();
    let mut events = Vec::new();
    while events.len() < n {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
            .await
            .expect("event stream stalled")
            .expect("event stream ended")
            .unwrap();
        if let Some(data) = frame.data_ref() {
            text.push_str(std::str::from_utf8(data).unwrap());
        }
        while let Some(end) = text.find("\n\n") {
            let block: String = text.drain(..end + 2).collect();
            if let Some(data) = block.lines().find_map(|l| l.strip_prefix("data: ")) {
                events.push(serde_json::from_str(data).unwrap());
            }
        }
    }
    events
}

#[tokio::test]
async fn event_stream_opens_with_snapshot_then_relays_updates() {
    let dir = TempDir::new().unwrap();
    let table = write_tables(dir.path(), &[start()]);
    let app = router(AppState::new());
    let id = session(&app, &table).await;

    let request = Request::builder().uri(format!("/sessions/{id}/events")).body(Body::empty()).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    assert!(response.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = response.into_body();

    let first = read_events(&mut body, 1).await;
    assert_eq!(first[0].kind, EventKind::Snapshot);
    assert_eq!(first[0].session.status, SessionStatus::Running);

    call(&app, "POST", &format!("/sessions/{id}/advance"), advance_body()).await;
    call(&app, "POST", &format!("/sessions/{id}/expert-action"), action_body("Up")).await;

    let later = read_events(&mut body, 3).await;
    let kinds: Vec<EventKind> = later.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, [EventKind::ExpertRequest, EventKind::Step, EventKind::Finished]);
    assert!(later[0].session.pending_request.is_some());
    assert_eq!(later[2].session.outcome, Some(Outcome::Goal));
    let mut seq = first[0].seq;
    for e in &later {
        assert_eq!(e.version, WIRE_VERSION);
        assert_eq!(e.session.version, WIRE_VERSION);
        assert!(e.seq > seq);
        seq = e.seq;
    }
    // Every event carries the grid and the variance heatmap.
    assert!(later.iter().all(|e| !e.session.grid.is_empty() && !e.session.variance_map.is_empty()));
}
