//! JSON-over-HTTP guidance API.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/apps` | ids of loaded apps |
//! | POST | `/apps` | upload an app model or a graph document |
//! | GET | `/apps/{id}/stg` | display document |
//! | POST | `/sessions` | start a session |
//! | GET | `/sessions/{id}/hint` | serve the current hint |
//! | POST | `/sessions/{id}/action` | report a move |
//! | POST | `/sessions/{id}/unknown-state` | admit a state the graph lacks |
//! | POST | `/sessions/{id}/idle-tick` | apply the idle rule |
//! | GET | `/sessions/{id}/metrics` | coverage figures |
//! | GET | `/sessions/{id}/log` | newline-delimited event log |
//!
//! Request bodies may carry `"version": "1"`; any other version is refused.
//! Timestamps (`at_ms`) are optional and default to the service clock.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stgnav::guidance::{write_log, Hint, ScreenLayout, SessionMetrics, TransitionReport};
use stgnav::planner::Plan;
use stgnav::stg::FORMAT_VERSION;
use stgnav::{ActionEdge, Error, StateNode};

use crate::display::{display_document, DisplayDocument};
use crate::store::{AppSummary, SessionEntry, Store};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub path: Option<String>,
}

impl ApiError {
    fn new(
        status: StatusCode,
        code: &str,
        message: impl Into<String>,
        path: Option<String>,
    ) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_owned(),
            message: message.into(),
            path,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no {what} with id {id:?}"),
            Some(format!("{what}_id")),
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (status, code, path) = match e {
            Error::Parse { path, .. } => (StatusCode::BAD_REQUEST, "parse_error", Some(path)),
            Error::Version { .. } => (
                StatusCode::BAD_REQUEST,
                "version_mismatch",
                Some("version".into()),
            ),
            Error::Param(_) => (StatusCode::BAD_REQUEST, "invalid_parameter", None),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict", None),
            Error::DuplicateState(_) => (
                StatusCode::CONFLICT,
                "duplicate_state",
                Some("state.state_id".into()),
            ),
            Error::UnknownState(_) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "unknown_state",
                Some("observed".into()),
            ),
            Error::InvalidAction { .. } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_action",
                Some("action_id".into()),
            ),
            Error::Capacity { .. } | Error::OracleCapacity { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "capacity", None)
            }
            Error::Validation(report) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation_error",
                report.violations.first().map(|v| v.invariant.clone()),
            ),
            Error::Consistency(_) | Error::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", None)
            }
        };
        ApiError::new(status, code, message, path)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a request body, accepting an optional `"version": "1"` member.
fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let text = if bytes.iter().all(u8::is_ascii_whitespace) {
        &b"{}"[..]
    } else {
        bytes
    };
    let mut value: serde_json::Value = serde_json::from_slice(text).map_err(|e| Error::Parse {
        path: format!("{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if let Some(obj) = value.as_object_mut() {
        match obj.remove("version") {
            None => {}
            Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
            Some(other) => {
                return Err(Error::Version {
                    found: other
                        .as_str()
                        .map_or_else(|| other.to_string(), str::to_owned),
                    expected: FORMAT_VERSION,
                }
                .into())
            }
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "parse_error",
            e.into_inner().to_string(),
            Some(path),
        )
    })
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StartSessionRequest {
    pub app_id: String,
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default)]
    pub idle_threshold_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    #[serde(default)]
    pub action_id: Option<String>,
    #[serde(default)]
    pub observed: Option<String>,
    #[serde(default)]
    pub at_ms: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UnknownStateRequest {
    pub state: StateNode,
    pub via_action: ActionEdge,
    #[serde(default)]
    pub outgoing: Vec<ActionEdge>,
    #[serde(default)]
    pub at_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ClockRequest {
    #[serde(default)]
    pub at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub version: String,
    pub session_id: String,
    pub app_id: Option<String>,
    pub current: String,
    pub screen: ScreenLayout,
    pub hint: Option<Hint>,
    pub plan: Plan,
    pub cursor: usize,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    #[serde(flatten)]
    pub view: SessionView,
    pub deviated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleResponse {
    #[serde(flatten)]
    pub view: SessionView,
    pub replanned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintResponse {
    pub version: String,
    pub session_id: String,
    pub current: String,
    pub hint: Option<Hint>,
    pub screen: ScreenLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub version: String,
    #[serde(flatten)]
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppList {
    pub version: String,
    pub apps: Vec<String>,
}

fn view(entry: &SessionEntry) -> SessionView {
    let s = &entry.session;
    SessionView {
        version: FORMAT_VERSION.to_owned(),
        session_id: s.id().to_owned(),
        app_id: entry.app_id.clone(),
        current: s.current().to_owned(),
        screen: s.screen(),
        hint: s.current_hint(),
        plan: s.plan().clone(),
        cursor: s.cursor(),
        metrics: s.metrics(),
    }
}

fn lock(entry: &Mutex<SessionEntry>) -> ApiResult<MutexGuard<'_, SessionEntry>> {
    entry.lock().map_err(|_| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "session lock poisoned",
            None,
        )
    })
}

fn session(store: &Store, id: &str) -> ApiResult<Arc<Mutex<SessionEntry>>> {
    store
        .session(id)
        .ok_or_else(|| ApiError::not_found("session", id))
}

async fn list_apps(State(store): State<Arc<Store>>) -> Json<AppList> {
    Json(AppList {
        version: FORMAT_VERSION.to_owned(),
        apps: store.app_ids(),
    })
}

async fn upload_app(
    State(store): State<Arc<Store>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<AppSummary>)> {
    Ok((StatusCode::CREATED, Json(store.add_app(&body)?)))
}

async fn app_stg(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<Json<DisplayDocument>> {
    let app = store
        .app(&id)
        .ok_or_else(|| ApiError::not_found("app", &id))?;
    Ok(Json(display_document(&app.graph)))
}

async fn start_session(
    State(store): State<Arc<Store>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let req: StartSessionRequest = parse_body(&body)?;
    let entry = store
        .start_session(&req.app_id, req.start.as_deref(), req.idle_threshold_ms)?
        .ok_or_else(|| ApiError::not_found("app", &req.app_id))?;
    let guard = lock(&entry)?;
    Ok((StatusCode::CREATED, Json(view(&guard))))
}

#[derive(Debug, Deserialize)]
struct ClockQuery {
    at_ms: Option<u64>,
}

async fn hint(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<ClockQuery>,
) -> ApiResult<Json<HintResponse>> {
    let entry = session(&store, &id)?;
    let mut e = lock(&entry)?;
    let now = e.now(q.at_ms);
    let hint = e.session.serve_hint(now);
    e.flush()?;
    Ok(Json(HintResponse {
        version: FORMAT_VERSION.to_owned(),
        session_id: id,
        current: e.session.current().to_owned(),
        hint,
        screen: e.session.screen(),
    }))
}

async fn action(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ActionResponse>> {
    let req: ActionRequest = parse_body(&body)?;
    let entry = session(&store, &id)?;
    let mut e = lock(&entry)?;
    let now = e.now(req.at_ms);
    let report = TransitionReport {
        action_id: req.action_id,
        observed: req.observed,
    };
    let deviated = e.session.report_transition(&report, now)?;
    e.flush()?;
    Ok(Json(ActionResponse {
        view: view(&e),
        deviated,
    }))
}

async fn unknown_state(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let req: UnknownStateRequest = parse_body(&body)?;
    let entry = session(&store, &id)?;
    let mut e = lock(&entry)?;
    let now = e.now(req.at_ms);
    e.session
        .register_unknown_state(req.state, req.via_action, req.outgoing, now)?;
    e.flush()?;
    Ok(Json(view(&e)))
}

async fn idle_tick(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<IdleResponse>> {
    let req: ClockRequest = parse_body(&body)?;
    let entry = session(&store, &id)?;
    let mut e = lock(&entry)?;
    let now = e.now(req.at_ms);
    let replanned = e.session.on_idle(now)?;
    e.flush()?;
    Ok(Json(IdleResponse {
        view: view(&e),
        replanned,
    }))
}

async fn metrics(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<Json<MetricsResponse>> {
    let entry = session(&store, &id)?;
    let e = lock(&entry)?;
    Ok(Json(MetricsResponse {
        version: FORMAT_VERSION.to_owned(),
        metrics: e.session.metrics(),
    }))
}

async fn log(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    let entry = session(&store, &id)?;
    let e = lock(&entry)?;
    let text = write_log(&e.session.header(), e.session.events());
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint", None)
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/apps", get(list_apps).post(upload_app))
        .route("/apps/{id}/stg", get(app_stg))
        .route("/sessions", post(start_session))
        .route("/sessions/{id}/hint", get(hint))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/unknown-state", post(unknown_state))
        .route("/sessions/{id}/idle-tick", post(idle_tick))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/log", get(log))
        .fallback(fallback)
        .with_state(store)
}
