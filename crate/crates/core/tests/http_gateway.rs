//! HTTP backend behavior against a local stub server.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use chrono::Utc;
use chromalens_core::{
    make_user_profile, BackendConfig, CapturedContext, CvdType, GatewayError, ImageSource,
    LlmGateway, PromptBundle, PromptEngine, SupportRequest,
};
use serde_json::{json, Value};

#[derive(Default)]
struct Stub {
    calls: AtomicU32,
    /// Statuses to return before succeeding; empty means succeed at once.
    script: Mutex<Vec<u16>>,
    last_body: Mutex<Option<Value>>,
    last_auth: Mutex<Option<String>>,
}

async fn handler(State(stub): State<Arc<Stub>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    stub.calls.fetch_add(1, Ordering::SeqCst);
    *stub.last_body.lock().unwrap() = Some(body);
    *stub.last_auth.lock().unwrap() = headers
        .get("authorization")
        .map(|v| v.to_str().unwrap().to_string());
    let next = {
        let mut script = stub.script.lock().unwrap();
        if script.is_empty() { None } else { Some(script.remove(0)) }
    };
    match next {
        Some(status) => (StatusCode::from_u16(status).unwrap(), Json(json!({"error": "scripted"}))),
        None => (
            StatusCode::OK,
            Json(json!({"choices": [{"message": {"role": "assistant", "content": "{\"ok\": true}"}}]})),
        ),
    }
}

async fn stalled() -> Json<Value> {
    tokio::time::sleep(Duration::from_secs(10)).await;
    Json(json!({}))
}

async fn start(stub: Arc<Stub>) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(handler))
        .route("/stall/chat/completions", post(stalled))
        .with_state(stub);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn bundle() -> PromptBundle {
    let img = image::RgbImage::from_pixel(64, 64, image::Rgb([0, 180, 0]));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    let ctx = CapturedContext::new(out.into_inner(), ImageSource::Camera, None, Utc::now(), 1 << 20).unwrap();
    let profile = make_user_profile("Alice", CvdType::Protanomaly, None).unwrap();
    PromptEngine::default()
        .assemble_prompt(&profile, &SupportRequest::Implicit, &ctx)
        .unwrap()
}

fn config(base: &str) -> BackendConfig {
    let mut c = BackendConfig::http(format!("{base}/v1"), "sk-test-secret");
    c.backoff_base_ms = 5;
    c
}

#[tokio::test]
async fn success_sends_openai_shaped_request() {
    let stub = Arc::new(Stub::default());
    let base = start(stub.clone()).await;
    let out = LlmGateway::new(config(&base)).unwrap().invoke(&bundle()).await.unwrap();
    assert_eq!(out.text, "{\"ok\": true}");
    assert_eq!(out.attempts, 1);

    let body = stub.last_body.lock().unwrap().clone().unwrap();
    assert_eq!(body["model"], "gpt-4o");
    assert_eq!(body["messages"][0]["role"], "system");
    assert!(body["messages"][0]["content"].as_str().unwrap().contains("reduced sensitivity to red light"));
    let parts = body["messages"][1]["content"].as_array().unwrap();
    assert_eq!(parts[0]["type"], "text");
    assert_eq!(parts[1]["type"], "image_url");
    assert!(parts[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
    assert!(!body.to_string().contains("sk-test-secret"));
    assert_eq!(stub.last_auth.lock().unwrap().as_deref(), Some("Bearer sk-test-secret"));
}

#[tokio::test]
async fn stalled_server_times_out() {
    let stub = Arc::new(Stub::default());
    let base = start(stub).await;
    let mut c = BackendConfig::http(format!("{base}/stall"), "k");
    c.timeout_ms = 1;
    c.backoff_base_ms = 1;
    let err = LlmGateway::new(c).unwrap().invoke(&bundle()).await.unwrap_err();
    assert!(matches!(err, GatewayError::Timeout { attempts: 3 }), "{err:?}");
}

#[tokio::test]
async fn auth_failure_is_not_retried() {
    for status in [401, 403] {
        let stub = Arc::new(Stub::default());
        *stub.script.lock().unwrap() = vec![status, status, status];
        let base = start(stub.clone()).await;
        let err = LlmGateway::new(config(&base)).unwrap().invoke(&bundle()).await.unwrap_err();
        assert!(matches!(err, GatewayError::AuthFailure { status: s } if s == status), "{err:?}");
        assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
    }
}

#[tokio::test]
async fn transient_failures_are_retried_then_succeed() {
    let stub = Arc::new(Stub::default());
    *stub.script.lock().unwrap() = vec![429, 503];
    let base = start(stub.clone()).await;
    let out = LlmGateway::new(config(&base)).unwrap().invoke(&bundle()).await.unwrap();
    assert_eq!(out.attempts, 3);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn retries_stop_at_max_retries() {
    let stub = Arc::new(Stub::default());
    *stub.script.lock().unwrap() = vec![500; 10];
    let base = start(stub.clone()).await;
    let err = LlmGateway::new(config(&base)).unwrap().invoke(&bundle()).await.unwrap_err();
    assert!(matches!(err, GatewayError::UpstreamError { status: 500, .. }), "{err:?}");
    assert_eq!(stub.calls.load(Ordering::SeqCst), 3);

    let stub = Arc::new(Stub::default());
    *stub.script.lock().unwrap() = vec![429; 10];
    let base = start(stub.clone()).await;
    let mut c = config(&base);
    c.max_retries = 0;
    let err = LlmGateway::new(c).unwrap().invoke(&bundle()).await.unwrap_err();
    assert!(matches!(err, GatewayError::RateLimited { attempts: 1 }), "{err:?}");
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let stub = Arc::new(Stub::default());
    *stub.script.lock().unwrap() = vec![400, 400, 400];
    let base = start(stub.clone()).await;
    let err = LlmGateway::new(config(&base)).unwrap().invoke(&bundle()).await.unwrap_err();
    assert!(matches!(err, GatewayError::UpstreamError { status: 400, .. }));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn unreachable_endpoint_is_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let mut c = BackendConfig::http(format!("http://127.0.0.1:{port}/v1"), "k");
    c.max_retries = 1;
    c.backoff_base_ms = 1;
    let err = LlmGateway::new(c).unwrap().invoke(&bundle()).await.unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }), "{err:?}");
}
