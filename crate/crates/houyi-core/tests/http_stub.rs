//! Integration tests for the HTTP backend against a local stub server.

mod common;

use std::net::TcpListener;
use std::time::Duration;

use common::{chat_body, spawn_stub};
use houyi_core::backend::http::HttpBackend;
use houyi_core::backend::{Backend, FinishReason, GenerationParams};

#[test]
fn echo_stub_round_trip() {
    let (endpoint, server) = spawn_stub(vec![(200, chat_body("stub payload", 7))], 1);
    let backend = HttpBackend::new(endpoint).with_api_key("test-key");
    let completion = backend.generate("hello", &GenerationParams::default());
    assert_eq!(completion.text, "stub payload");
    assert_eq!(completion.finish_reason, FinishReason::Stop);
    assert_eq!(completion.tokens_used, 7);
    assert_eq!(server.join().unwrap(), 1);
}

#[test]
fn rate_limited_then_succeeds_after_retries() {
    let (endpoint, server) = spawn_stub(
        vec![
            (429, "{}".to_string()),
            (429, "{}".to_string()),
            (200, chat_body("after retries", 12)),
        ],
        3,
    );
    let backend = HttpBackend::new(endpoint)
        .with_api_key("test-key")
        .with_backoff_base(Duration::from_millis(1));
    let completion = backend.generate("hello", &GenerationParams::default());
    assert_eq!(completion.text, "after retries");
    assert_eq!(completion.tokens_used, 12);
    assert_eq!(server.join().unwrap(), 3);
}

#[test]
fn server_errors_exhaust_retries() {
    let (endpoint, server) = spawn_stub(vec![(500, "{}".to_string())], 4);
    let backend = HttpBackend::new(endpoint)
        .with_api_key("test-key")
        .with_backoff_base(Duration::from_millis(1));
    let completion = backend.generate("hello", &GenerationParams::default());
    assert_eq!(completion.error(), Some("status 500"));
    assert_eq!(server.join().unwrap(), 4);
}

#[test]
fn malformed_body_maps_to_decode_error() {
    let (endpoint, server) = spawn_stub(vec![(200, "not json at all".to_string())], 1);
    let backend = HttpBackend::new(endpoint).with_api_key("test-key");
    let completion = backend.generate("hello", &GenerationParams::default());
    assert_eq!(completion.error(), Some("decode"));
    assert_eq!(server.join().unwrap(), 1);
}

#[test]
fn unreachable_host_maps_to_connect_error() {
    // Bind-then-drop gives a port with no listener.
    let port = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let backend = HttpBackend::new(format!("http://127.0.0.1:{port}/v1/chat/completions"))
        .with_api_key("test-key")
        .with_backoff_base(Duration::from_millis(1));
    let completion = backend.generate("hello", &GenerationParams::default());
    assert_eq!(completion.error(), Some("connect"));
}
