//! Exercises the live HTTP clients against a local in-process server.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use prefpipe_core::provider::{
    GenRequest, Generator, HttpGenerator, HttpProviderConfig, HttpRetrievalConfig, HttpRetriever,
    ProviderError, Retriever, RetryPolicy, StageTag,
};

#[derive(Clone)]
struct ServerState {
    chat_calls: Arc<AtomicU32>,
    rate_limit_first: u32,
}

async fn chat_handler(
    State(state): State<ServerState>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let call = state.chat_calls.fetch_add(1, Ordering::SeqCst) + 1;
    match headers.get("authorization").and_then(|v| v.to_str().ok()) {
        Some("Bearer good-key") => {}
        _ => {
            return (
                StatusCode::UNAUTHORIZED,
                Json(json!({"error": "bad credential"})),
            )
        }
    }
    if call <= state.rate_limit_first {
        return (
            StatusCode::TOO_MANY_REQUESTS,
            Json(json!({"error": "slow down"})),
        );
    }
    let user = body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default();
    (
        StatusCode::OK,
        Json(json!({
            "choices": [{
                "message": {
                    "content": format!("echo:{user}"),
                    "reasoning_content": "thought hard"
                }
            }]
        })),
    )
}

async fn search_handler(Json(body): Json<Value>) -> Json<Value> {
    let query = body["query"].as_str().unwrap_or_default();
    Json(json!({
        "passages": [
            format!("A long enough passage about {query} with plenty of detail to keep."),
            "x", // dropped by the relevance floor
        ]
    }))
}

async fn spawn_server(rate_limit_first: u32) -> (SocketAddr, Arc<AtomicU32>) {
    let calls = Arc::new(AtomicU32::new(0));
    let state = ServerState {
        chat_calls: calls.clone(),
        rate_limit_first,
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(chat_handler))
        .route("/search", post(search_handler))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    (addr, calls)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 4,
        base_delay: Duration::from_millis(5),
        multiplier: 2.0,
        jitter_frac: 0.2,
    }
}

fn generator_config(addr: SocketAddr, key_env: &str) -> HttpProviderConfig {
    HttpProviderConfig {
        base_url: format!("http://{addr}"),
        model: "test-model".into(),
        api_key_env: key_env.into(),
        timeout: Duration::from_secs(5),
        retry: fast_retry(),
        max_concurrency: Some(4),
    }
}

#[tokio::test]
async fn completes_and_reads_reasoning_channel() {
    let (addr, calls) = spawn_server(0).await;
    std::env::set_var("TEST_KEY_OK", "good-key");
    let generator = HttpGenerator::new(generator_config(addr, "TEST_KEY_OK")).unwrap();
    let req = GenRequest::new(StageTag::Reject, "sys", "hello").with_raw_reasoning(true);
    let resp = generator.chat_complete(&req).await.unwrap();
    assert_eq!(resp.text, "echo:hello");
    assert_eq!(resp.raw_reasoning.as_deref(), Some("thought hard"));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn auth_failure_is_not_retried() {
    let (addr, calls) = spawn_server(0).await;
    std::env::set_var("TEST_KEY_BAD", "wrong-key");
    let generator = HttpGenerator::new(generator_config(addr, "TEST_KEY_BAD")).unwrap();
    let req = GenRequest::new(StageTag::Enhance, "", "hello");
    let err = generator.chat_complete(&req).await.unwrap_err();
    assert!(matches!(err, ProviderError::Auth(_)), "got {err}");
    assert_eq!(calls.load(Ordering::SeqCst), 1, "auth errors must not retry");
}

#[tokio::test]
async fn rate_limits_are_retried_until_success() {
    let (addr, calls) = spawn_server(2).await;
    std::env::set_var("TEST_KEY_RL", "good-key");
    let generator = HttpGenerator::new(generator_config(addr, "TEST_KEY_RL")).unwrap();
    let req = GenRequest::new(StageTag::Enhance, "", "hello");
    let resp = generator.chat_complete(&req).await.unwrap();
    assert_eq!(resp.text, "echo:hello");
    assert_eq!(calls.load(Ordering::SeqCst), 3, "two 429s then success");
}

#[tokio::test]
async fn exhausted_retries_surface_the_last_error() {
    let (addr, calls) = spawn_server(100).await;
    std::env::set_var("TEST_KEY_EX", "good-key");
    let generator = HttpGenerator::new(generator_config(addr, "TEST_KEY_EX")).unwrap();
    let req = GenRequest::new(StageTag::Enhance, "", "hello");
    let err = generator.chat_complete(&req).await.unwrap_err();
    match err {
        ProviderError::Exhausted { attempts, last } => {
            assert_eq!(attempts, 4);
            assert!(matches!(*last, ProviderError::RateLimited(_)));
        }
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(calls.load(Ordering::SeqCst), 4);
}

#[tokio::test]
async fn unreachable_backend_is_a_transport_error() {
    // Bind/drop a socket to get a port nothing listens on.
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);

    let mut config = generator_config(addr, "TEST_KEY_NONE");
    config.retry = RetryPolicy {
        max_attempts: 2,
        base_delay: Duration::from_millis(2),
        multiplier: 2.0,
        jitter_frac: 0.0,
    };
    let generator = HttpGenerator::new(config).unwrap();
    let req = GenRequest::new(StageTag::Enhance, "", "hello");
    let err = generator.chat_complete(&req).await.unwrap_err();
    match err {
        ProviderError::Exhausted { last, .. } => {
            assert!(matches!(*last, ProviderError::Transport(_)))
        }
        other => panic!("unexpected error {other}"),
    }
}

#[tokio::test]
async fn retrieval_cleans_and_merges_passages() {
    let (addr, _) = spawn_server(0).await;
    let retriever = HttpRetriever::new(HttpRetrievalConfig {
        base_url: format!("http://{addr}"),
        retry: fast_retry(),
        ..Default::default()
    })
    .unwrap();
    let result = retriever.retrieve("herbs").await.unwrap();
    assert_eq!(result.passages.len(), 2);
    // The one-character passage fell below the relevance floor.
    assert!(result.merged.contains("herbs"));
    assert!(!result.merged.contains('\u{1}'));
    assert!(!result.merged.contains("\n---\n"));
    assert!(!result.is_empty());
}
