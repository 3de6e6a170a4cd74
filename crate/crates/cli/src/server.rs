//! HTTP+JSON session API.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, Write};
use std::path::Path as FsPath;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dmgr_core::corpus::{ItemDescriptor, ItemId};
use dmgr_core::seed::combine;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineError, ErrorKind, Mode, Session, Status, Turn};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match e.kind {
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Validation => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            code: e.code(),
            message: e.message,
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

// ---- wire types ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub mode: Mode,
    pub seed: Option<u64>,
    pub target_id: Option<ItemId>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub text: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinishRequest {
    #[serde(default)]
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub id: ItemId,
    pub descriptor: ItemDescriptor,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub mode: Mode,
    /// Feedback turns taken so far.
    pub turn: usize,
    pub horizon: usize,
    pub candidate: ItemView,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<ItemView>,
}

/// Withheld from display until the session ends.
#[derive(Debug, Serialize, Deserialize)]
pub struct Debug {
    pub percentile: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub turn: usize,
    pub candidate: ItemView,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debug: Option<Debug>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub session_id: String,
    pub mode: Mode,
    pub status: Status,
    pub turns: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<ItemView>,
    /// Target percentile after each turn.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub mode: Mode,
    pub status: Status,
    pub finished: bool,
    pub created_at: u64,
    pub seed: u64,
    pub turn: usize,
    pub horizon: usize,
    pub candidate: ItemView,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<ItemView>,
    /// Percentiles are included only once the session is finished.
    pub history: Vec<Turn>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub checkpoint: String,
    pub corpus: String,
}

// ---- session log ----

/// One line of the append-only session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum LogEvent {
    Create {
        session_id: String,
        mode: Mode,
        seed: u64,
        target_id: Option<ItemId>,
        candidate: ItemId,
        at: u64,
    },
    Feedback {
        session_id: String,
        turn: usize,
        text: String,
        candidate: ItemId,
        status: Status,
    },
    Finish {
        session_id: String,
        found: bool,
        status: Status,
    },
}

pub fn read_log(path: impl AsRef<FsPath>) -> std::io::Result<Vec<LogEvent>> {
    let file = File::open(path)?;
    let mut events = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
    }
    Ok(events)
}

/// Re-runs every logged session through `engine` and checks each candidate
/// against the log. Returns the rebuilt sessions in creation order.
pub fn replay_log(engine: &Engine, events: &[LogEvent]) -> Result<Vec<Session>, String> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mismatch = |id: &str, what: String| format!("session {id}: {what}");
    for event in events {
        match event {
            LogEvent::Create { session_id, mode, seed, target_id, candidate, at } => {
                let s = engine
                    .create(session_id.clone(), *mode, *seed, *target_id, *at)
                    .map_err(|e| mismatch(session_id, e.to_string()))?;
                if s.candidate != *candidate {
                    return Err(mismatch(session_id, format!("first candidate {} vs logged {candidate}", s.candidate)));
                }
                index.insert(session_id.clone(), sessions.len());
                sessions.push(s);
            }
            LogEvent::Feedback { session_id, turn, text, candidate, status } => {
                let s = index
                    .get(session_id)
                    .map(|&i| &mut sessions[i])
                    .ok_or_else(|| mismatch(session_id, "feedback before create".into()))?;
                engine.feedback(s, Some(text)).map_err(|e| mismatch(session_id, e.to_string()))?;
                if s.turns.len() != *turn || s.candidate != *candidate || s.status != *status {
                    return Err(mismatch(
                        session_id,
                        format!("turn {turn}: candidate {} vs logged {candidate}", s.candidate),
                    ));
                }
            }
            LogEvent::Finish { session_id, found, status } => {
                let s = index
                    .get(session_id)
                    .map(|&i| &mut sessions[i])
                    .ok_or_else(|| mismatch(session_id, "finish before create".into()))?;
                engine.finish(s, *found).map_err(|e| mismatch(session_id, e.to_string()))?;
                if s.status != *status {
                    return Err(mismatch(session_id, "final status differs".into()));
                }
            }
        }
    }
    Ok(sessions)
}

// ---- app ----

pub struct AppState {
    engine: Engine,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    counter: AtomicU64,
    seed: u64,
    log: Option<Mutex<File>>,
    checkpoint: String,
    corpus: String,
}

impl AppState {
    /// `checkpoint` and `corpus` are reported by the health endpoint.
    pub fn new(engine: Engine, seed: u64, checkpoint: String, corpus: String) -> Self {
        Self {
            engine,
            sessions: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
            seed,
            log: None,
            checkpoint,
            corpus,
        }
    }

    pub fn with_log(mut self, path: impl AsRef<FsPath>) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn append(&self, event: &LogEvent) -> Result<(), ApiError> {
        let Some(log) = &self.log else { return Ok(()) };
        let mut line = serde_json::to_string(event).map_err(|e| internal(e.to_string()))?;
        line.push('\n');
        let mut file = log.lock().map_err(|_| internal("session log poisoned".into()))?;
        file.write_all(line.as_bytes()).map_err(|e| internal(e.to_string()))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let sessions = self.sessions.lock().map_err(|_| internal("session table poisoned".into()))?;
        sessions.get(id).cloned().ok_or_else(|| {
            EngineError {
                kind: ErrorKind::NotFound,
                message: format!("no session {id}"),
            }
            .into()
        })
    }

    fn item_view(&self, id: ItemId) -> Result<ItemView, ApiError> {
        Ok(ItemView {
            id,
            descriptor: self.engine.item(id)?.clone(),
        })
    }

    /// Target card: study mode only.
    fn shown_target(&self, s: &Session) -> Result<Option<ItemView>, ApiError> {
        match (s.mode, s.target) {
            (Mode::Study, Some(t)) => Ok(Some(self.item_view(t)?)),
            _ => Ok(None),
        }
    }
}

fn internal(message: String) -> ApiError {
    EngineError {
        kind: ErrorKind::Internal,
        message,
    }
    .into()
}

fn lock(session: &Mutex<Session>) -> Result<std::sync::MutexGuard<'_, Session>, ApiError> {
    session.lock().map_err(|_| internal("session poisoned".into()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/items/{id}", get(item))
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}", get(show))
        .route("/api/sessions/{id}/feedback", post(feedback))
        .route("/api/sessions/{id}/finish", post(finish))
        .fallback(not_found)
        .with_state(state)
}

async fn not_found() -> ApiError {
    EngineError {
        kind: ErrorKind::NotFound,
        message: "no such endpoint".into(),
    }
    .into()
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        checkpoint: app.checkpoint.clone(),
        corpus: app.corpus.clone(),
    })
}

async fn item(State(app): State<Arc<AppState>>, id: Result<Path<ItemId>, PathRejection>) -> ApiResult<ItemView> {
    let Path(id) = id?;
    Ok(Json(app.item_view(id)?))
}

async fn create(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let Json(req) = body?;
    let n = app.counter.fetch_add(1, Ordering::SeqCst);
    let seed = req.seed.unwrap_or_else(|| combine(app.seed, n));
    let id = format!("{n:06}-{:012x}", combine(seed, n) & 0xffff_ffff_ffff);
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let session = app.engine.create(id.clone(), req.mode, seed, req.target_id, now)?;
    app.append(&LogEvent::Create {
        session_id: id.clone(),
        mode: session.mode,
        seed,
        target_id: session.target,
        candidate: session.candidate,
        at: now,
    })?;
    let response = CreateResponse {
        session_id: id.clone(),
        mode: session.mode,
        turn: 0,
        horizon: app.engine.horizon(),
        candidate: app.item_view(session.candidate)?,
        target: app.shown_target(&session)?,
    };
    app.sessions
        .lock()
        .map_err(|_| internal("session table poisoned".into()))?
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(response)))
}

async fn feedback(
    State(app): State<Arc<AppState>>,
    id: Result<Path<String>, PathRejection>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ApiResult<FeedbackResponse> {
    let Path(id) = id?;
    let handle = app.session(&id)?;
    let Json(req) = body?;
    let mut s = lock(&handle)?;
    app.engine.feedback(&mut s, req.text.as_deref())?;
    let last = s.turns.last().cloned().ok_or_else(|| internal("turn not recorded".into()))?;
    app.append(&LogEvent::Feedback {
        session_id: id,
        turn: s.turns.len(),
        text: last.feedback.clone(),
        candidate: s.candidate,
        status: s.status,
    })?;
    Ok(Json(FeedbackResponse {
        turn: s.turns.len(),
        candidate: app.item_view(s.candidate)?,
        status: s.status,
        debug: last.percentile.map(|percentile| Debug { percentile }),
    }))
}

async fn finish(
    State(app): State<Arc<AppState>>,
    id: Result<Path<String>, PathRejection>,
    body: Result<Json<FinishRequest>, JsonRejection>,
) -> ApiResult<Summary> {
    let Path(id) = id?;
    let handle = app.session(&id)?;
    let Json(req) = body?;
    let mut s = lock(&handle)?;
    app.engine.finish(&mut s, req.found)?;
    app.append(&LogEvent::Finish {
        session_id: id.clone(),
        found: req.found,
        status: s.status,
    })?;
    let curve = match s.mode {
        Mode::Free => None,
        Mode::Study | Mode::Simulated => Some(s.percentiles()),
    };
    Ok(Json(Summary {
        session_id: id,
        mode: s.mode,
        status: s.status,
        turns: s.turns.len(),
        target: match s.mode {
            Mode::Free => None,
            _ => s.target.map(|t| app.item_view(t)).transpose()?,
        },
        curve,
    }))
}

async fn show(State(app): State<Arc<AppState>>, id: Result<Path<String>, PathRejection>) -> ApiResult<SessionView> {
    let Path(id) = id?;
    let handle = app.session(&id)?;
    let s = lock(&handle)?;
    let reveal = s.finished && s.mode != Mode::Free;
    let history = s
        .turns
        .iter()
        .map(|t| Turn {
            percentile: t.percentile.filter(|_| reveal),
            ..t.clone()
        })
        .collect();
    Ok(Json(SessionView {
        session_id: id,
        mode: s.mode,
        status: s.status,
        finished: s.finished,
        created_at: s.created_at,
        seed: s.seed,
        turn: s.turns.len(),
        horizon: app.engine.horizon(),
        candidate: app.item_view(s.candidate)?,
        target: match s.mode {
            Mode::Free => None,
            Mode::Study => app.shown_target(&s)?,
            Mode::Simulated => s.target.map(|t| app.item_view(t)).transpose()?,
        },
        history,
    }))
}

pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
