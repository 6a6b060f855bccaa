use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::SeedableRng;
use serde_json::Value;
use tower::ServiceExt;

use searchassist_core::domain::{Encoding, STATE_DIM};
use searchassist_core::neural::{save_checkpoint, PolicyParams};
use searchassist_serve::demo::{car_catalog, scripted_conversation};
use searchassist_serve::session::{SessionStore, DEFAULT_TTL};
use searchassist_serve::{router, AgentResponse, Assistant, MessageBody, Model};

fn app() -> Router {
    let dir = tempfile::tempdir().unwrap();
    let params = PolicyParams::init(STATE_DIM, 16, &mut rand::rngs::StdRng::seed_from_u64(21));
    save_checkpoint(dir.path(), &params, Encoding::Full).unwrap();
    let model = Model::load_lstm(dir.path(), Some(16)).unwrap();
    router(Arc::new(Assistant::new(model, Arc::new(car_catalog()), SessionStore::in_memory(DEFAULT_TTL))))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, json)
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    body["session_id"].as_str().unwrap().to_string()
}

async fn say(app: &Router, id: &str, body: &MessageBody) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/message"), Some(serde_json::to_string(body).unwrap())).await
}

#[tokio::test]
async fn health_reports_model_version() {
    let (status, body) = call(&app(), "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert!(body["model_version"].as_str().unwrap().starts_with("lstm-h16-"));
}

#[tokio::test]
async fn scripted_conversation_round_trip() {
    let app = app();
    let id = new_session(&app).await;
    let script = scripted_conversation();
    for (i, turn) in script.iter().enumerate() {
        let (status, body) = say(&app, &id, turn).await;
        assert_eq!(status, StatusCode::OK, "turn {i}: {body}");
        let resp: AgentResponse = serde_json::from_value(body.clone()).unwrap();
        resp.check().unwrap_or_else(|e| panic!("turn {i}: {e}: {body}"));
        if i == 0 {
            assert_eq!(resp.utterance, "Hello, how may I help you?");
        }
    }
    let (status, view) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["ended"], true);
    assert_eq!(view["cart"], serde_json::json!(["car-001", "car-009"]));
    assert!(view.get("hidden").is_none());
    assert_eq!(view["length_conv"], (script.len() - 1) as u64);
}

#[tokio::test]
async fn unknown_sessions_are_404() {
    let app = app();
    let (status, body) = say(&app, "missing", &MessageBody::text("cars")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("missing"));
    let (status, _) = call(&app, "GET", "/sessions/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn delete_is_idempotent() {
    let app = app();
    let id = new_session(&app).await;
    for _ in 0..2 {
        let (status, _) = call(&app, "DELETE", &format!("/sessions/{id}"), None).await;
        assert_eq!(status, StatusCode::NO_CONTENT);
    }
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_input_is_400() {
    let app = app();
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/message");
    for body in [
        "not json",
        "{}",
        r#"{"text": "   "}"#,
        r#"{"event": "click_result"}"#,
        r#"{"event": "click_result", "asset_id": "nope"}"#,
    ] {
        let (status, json) = call(&app, "POST", &uri, Some(body.into())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(json["error"].is_string());
    }
    // Rejected turns leave the session as it was.
    let (_, view) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(view["length_conv"], 0);
}

#[tokio::test]
async fn ended_session_is_409() {
    let app = app();
    let id = new_session(&app).await;
    say(&app, &id, &MessageBody::text("cars")).await;
    say(&app, &id, &MessageBody::text("bye")).await;
    let (status, _) = say(&app, &id, &MessageBody::text("cars")).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn sessions_run_concurrently() {
    let app = app();
    let mut tasks = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let id = new_session(&app).await;
            let mut actions = Vec::new();
            for turn in scripted_conversation() {
                let (status, body) = say(&app, &id, &turn).await;
                assert_eq!(status, StatusCode::OK);
                actions.push(body["action"].clone());
            }
            actions
        }));
    }
    let mut all = Vec::new();
    for t in tasks {
        all.push(t.await.unwrap());
    }
    // Argmax serving: identical inputs give identical transcripts.
    assert!(all.windows(2).all(|w| w[0] == w[1]));
}
