use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{AgentResponse, Assistant, Message};
use crate::error::ServeError;
use crate::nlu::UiEvent;
use crate::session::SessionView;

impl ServeError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServeError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServeError::BadInput(_) => StatusCode::BAD_REQUEST,
            ServeError::ModelMismatch(_) | ServeError::SessionEnded(_) => StatusCode::CONFLICT,
            ServeError::Core(_) | ServeError::Io(_) | ServeError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// Body of `POST /sessions/{id}/message`: either `text` or an `event`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl MessageBody {
    pub fn text(text: &str) -> Self {
        Self { text: Some(text.into()), ..Self::default() }
    }

    pub fn event(event: &str, asset_id: Option<&str>, category: Option<&str>) -> Self {
        Self {
            text: None,
            event: Some(event.into()),
            asset_id: asset_id.map(str::to_string),
            category: category.map(str::to_string),
        }
    }

    pub fn into_message(self) -> Result<Message, ServeError> {
        let need_asset = |a: Option<String>| a.ok_or_else(|| ServeError::BadInput("event needs `asset_id`".into()));
        match (self.text, self.event) {
            (Some(text), None) => Ok(Message::Text(text)),
            (None, Some(event)) => {
                let e = match event.as_str() {
                    "click_result" => UiEvent::ClickResult { asset_id: need_asset(self.asset_id)? },
                    "add_to_cart" => UiEvent::AddToCart { asset_id: need_asset(self.asset_id)? },
                    "drag_similar" => UiEvent::DragSimilar { asset_id: need_asset(self.asset_id)?, tags: vec![] },
                    "download" => UiEvent::Download { asset_id: self.asset_id },
                    "category_click" => UiEvent::CategoryClick {
                        category: self.category.ok_or_else(|| ServeError::BadInput("event needs `category`".into()))?,
                    },
                    other => return Err(ServeError::BadInput(format!("unknown event `{other}`"))),
                };
                Ok(Message::Event(e))
            }
            _ => Err(ServeError::BadInput("send exactly one of `text` or `event`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: String,
}

type AppState = Arc<Assistant>;

async fn create(State(app): State<AppState>) -> Result<Json<Created>, ServeError> {
    Ok(Json(Created { session_id: app.create_session()? }))
}

async fn show(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ServeError> {
    Ok(Json(app.view(&id)?))
}

async fn remove(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ServeError> {
    app.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn message(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, JsonRejection>,
) -> Result<Json<AgentResponse>, ServeError> {
    let Json(body) = body.map_err(|e| ServeError::BadInput(e.body_text()))?;
    let msg = body.into_message()?;
    let app = app.clone();
    let response = tokio::task::spawn_blocking(move || app.message(&id, msg))
        .await
        .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
    Ok(Json(response))
}

async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health { status: "ok".into(), model_version: app.model.version() })
}

pub fn router(app: Arc<Assistant>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show).delete(remove))
        .route("/sessions/{id}/message", post(message))
        .with_state(app)
}

/// Serves until ctrl-c.
pub async fn serve(app: Arc<Assistant>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
