//! The OpenAI-compatible backend against a local mock provider.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use selfclone::chat::ChatMessage;
use selfclone::clock::ManualClock;
use selfclone::gateway::{Gateway, GatewayError, ModelConfig, OpenAiBackend};

#[derive(Clone, Default)]
struct Mock {
    calls: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<String>>>,
}

/// Behaviour keyed on the model id: `flaky` fails twice with 503, `refuse`
/// returns 400, `slow` sleeps past the client timeout, anything else echoes.
async fn completions(State(mock): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = mock.calls.fetch_add(1, Ordering::SeqCst);
    mock.bodies.lock().unwrap().push(body.clone());
    if let Some(v) = headers.get("authorization") {
        mock.auth.lock().unwrap().push(v.to_str().unwrap().to_string());
    }
    let reply = |text: &str| Json(json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]}));
    match body["model"].as_str().unwrap() {
        "flaky" if n < 2 => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({}))),
        "refuse" => (StatusCode::BAD_REQUEST, Json(json!({"error": {"message": "policy"}}))),
        "filtered" => (
            StatusCode::OK,
            Json(json!({"choices": [{"message": {"role": "assistant", "content": null}, "finish_reason": "content_filter"}]})),
        ),
        "slow" => {
            tokio::time::sleep(Duration::from_millis(800)).await;
            (StatusCode::OK, reply("too late"))
        }
        _ => {
            let last = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
            (StatusCode::OK, reply(&format!("echo: {last}")))
        }
    }
}

fn spawn_mock() -> (SocketAddr, Mock) {
    let mock = Mock::default();
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(mock.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (rx.recv().unwrap(), mock)
}

fn gateway(addr: SocketAddr, model: &str, key: Option<&str>) -> Gateway {
    let config = ModelConfig {
        model_id: model.into(),
        endpoint: format!("http://{addr}/v1"),
        temperature: 0.3,
        timeout: Duration::from_millis(300),
        max_retries: 2,
        backoff_base: Duration::ZERO,
    };
    Gateway::new(Arc::new(OpenAiBackend::new(key.map(String::from))), config, Arc::new(ManualClock::new(0))).unwrap()
}

#[test]
fn request_shape_and_reply() {
    let (addr, mock) = spawn_mock();
    let history = [ChatMessage::assistant("Hey Alex!", 0), ChatMessage::user("hi there", 10)];
    let reply = gateway(addr, "echo", Some("sk-test")).complete("be kind", &history).unwrap();
    assert_eq!(reply.text, "echo: hi there");
    let body = &mock.bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "echo");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(
        body["messages"],
        json!([
            {"role": "system", "content": "be kind"},
            {"role": "assistant", "content": "Hey Alex!"},
            {"role": "user", "content": "hi there"}
        ])
    );
    assert_eq!(mock.auth.lock().unwrap().as_slice(), ["Bearer sk-test"]);
}

#[test]
fn server_errors_are_retried() {
    let (addr, mock) = spawn_mock();
    let reply = gateway(addr, "flaky", None).complete("s", &[ChatMessage::user("x", 0)]).unwrap();
    assert_eq!(reply.text, "echo: x");
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);
    assert!(mock.auth.lock().unwrap().is_empty());
}

#[test]
fn client_errors_and_filters_are_refusals() {
    let (addr, mock) = spawn_mock();
    assert!(matches!(gateway(addr, "refuse", None).complete("s", &[]), Err(GatewayError::ProviderRefusal(_))));
    assert_eq!(mock.calls.load(Ordering::SeqCst), 1);
    assert!(matches!(gateway(addr, "filtered", None).complete("s", &[]), Err(GatewayError::ProviderRefusal(_))));
}

#[test]
fn slow_provider_times_out_after_retries() {
    let (addr, mock) = spawn_mock();
    assert_eq!(gateway(addr, "slow", None).complete("s", &[]), Err(GatewayError::Timeout));
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = gateway(addr, "echo", None).complete("s", &[]).unwrap_err();
    assert!(err.is_retryable(), "{err:?}");
}
