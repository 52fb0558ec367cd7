//! HTTP/JSON front of [`SessionManager`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/` | | chat page |
//! | GET | `/checkpoints` | | `{"checkpoints": [..]}` |
//! | POST | `/sessions` | `{"checkpoint": ".."}` | `SessionOpened`, 201 |
//! | POST | `/sessions/{id}/turns` | `{"text": ".."}` | `TurnReply` |
//! | GET | `/sessions/{id}/transcript` | | `Transcript` |
//!
//! Errors are `{"error": kind, "message": ..}` with 404 for unknown ids,
//! 400 for bad input and 409 for turns posted to a finished session.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ndqn_core::session::{SessionManager, SessionOpened, TurnRecord, TurnReply};
use ndqn_core::Error;
use serde::{Deserialize, Serialize};

const INDEX: &str = include_str!("../static/index.html");

#[derive(Debug, Deserialize, Serialize)]
pub struct CreateSession {
    pub checkpoint: String,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct PostTurn {
    pub text: String,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct CheckpointList {
    pub checkpoints: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct Transcript {
    pub session_id: String,
    pub complete: bool,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub enum ApiError {
    Core(Error),
    Body(JsonRejection),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::Body(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::Body(e) => (StatusCode::BAD_REQUEST, "bad_request", e.body_text()),
            ApiError::Core(e) => {
                let (status, kind) = match &e {
                    Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
                    Error::SessionComplete(_) => (StatusCode::CONFLICT, "session_complete"),
                    Error::Input(_) | Error::Config(_) | Error::Parse { .. } => (StatusCode::BAD_REQUEST, "bad_request"),
                    Error::Checkpoint(_) => (StatusCode::UNPROCESSABLE_ENTITY, "checkpoint"),
                    _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
                };
                (status, kind, e.to_string())
            }
        };
        let body = ErrorBody {
            error: kind.to_owned(),
            message,
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<SessionManager>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> ndqn_core::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::Env(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

async fn index() -> Html<&'static str> {
    Html(INDEX)
}

async fn list_checkpoints(State(m): State<Shared>) -> Result<Json<CheckpointList>, ApiError> {
    let checkpoints = blocking(move || m.checkpoints()).await?;
    Ok(Json(CheckpointList { checkpoints }))
}

async fn create_session(
    State(m): State<Shared>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionOpened>), ApiError> {
    let Json(req) = body?;
    let opened = blocking(move || m.create_session(&req.checkpoint)).await?;
    Ok((StatusCode::CREATED, Json(opened)))
}

async fn post_turn(
    State(m): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<PostTurn>, JsonRejection>,
) -> Result<Json<TurnReply>, ApiError> {
    let Json(req) = body?;
    Ok(Json(blocking(move || m.post_user_turn(&id, &req.text)).await?))
}

async fn transcript(State(m): State<Shared>, Path(id): Path<String>) -> Result<Json<Transcript>, ApiError> {
    let turns = blocking({
        let id = id.clone();
        move || m.transcript(&id)
    })
    .await?;
    let complete = turns.last().is_some_and(|t| t.terminal);
    Ok(Json(Transcript {
        session_id: id,
        complete,
        turns,
    }))
}

pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/checkpoints", get(list_checkpoints))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/sessions/{id}/transcript", get(transcript))
        .with_state(manager)
}
