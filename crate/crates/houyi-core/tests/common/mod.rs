//! Minimal chat-completions stub server shared by integration tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

/// Serves `responses[n]` to the n-th request (the last entry repeats), then
/// shuts down after `expected` requests. Returns the endpoint URL and a join
/// handle yielding the number of requests served.
pub fn spawn_stub(
    responses: Vec<(u16, String)>,
    expected: u32,
) -> (String, std::thread::JoinHandle<u32>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub listener");
    let addr = listener.local_addr().unwrap();
    let served = Arc::new(AtomicU32::new(0));
    let handle = std::thread::spawn(move || {
        for _ in 0..expected {
            let (stream, _) = listener.accept().expect("accept");
            let index = served.fetch_add(1, Ordering::SeqCst) as usize;
            let (status, body) = responses
                .get(index)
                .or_else(|| responses.last())
                .expect("at least one response")
                .clone();
            handle_connection(stream, status, &body);
        }
        served.load(Ordering::SeqCst)
    });
    (format!("http://{addr}/v1/chat/completions"), handle)
}

fn handle_connection(mut stream: TcpStream, status: u16, body: &str) {
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        let lower = line.to_lowercase();
        if let Some(value) = lower.strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap_or(0);
        }
        if line == "\r\n" {
            break;
        }
    }
    let mut request_body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut request_body).ok();
    }
    let reason = match status {
        200 => "OK",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Status",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes()).ok();
    stream.flush().ok();
}

/// A minimal chat-completions success body.
pub fn chat_body(content: &str, total_tokens: u32) -> String {
    format!(
        r#"{{"choices":[{{"message":{{"role":"assistant","content":"{content}"}},"finish_reason":"stop"}}],"usage":{{"total_tokens":{total_tokens}}}}}"#
    )
}
