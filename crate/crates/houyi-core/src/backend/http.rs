//! HTTP backend for chat-completions-style endpoints.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Completion, FinishReason, GenerationParams};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "HOUYI_API_KEY";

const DEFAULT_MAX_RETRIES: u32 = 3;
const DEFAULT_BACKOFF_BASE_MS: u64 = 250;
const DEFAULT_REQUESTS_PER_MINUTE: u32 = 600;

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
struct ChatUsage {
    #[serde(default)]
    total_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Debug)]
struct LimiterState {
    window_start: Instant,
    sent_in_window: u32,
}

/// Blocking chat-completions client with retry, exponential backoff, and a
/// per-endpoint requests-per-minute limiter.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_base: Duration,
    requests_per_minute: u32,
    limiter: Mutex<LimiterState>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Creates a client for `endpoint`, reading the API key from the
    /// `HOUYI_API_KEY` environment variable if present.
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpBackend {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("reqwest client builds"),
            endpoint: endpoint.into(),
            model: "gpt-3.5-turbo".to_string(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_base: Duration::from_millis(DEFAULT_BACKOFF_BASE_MS),
            requests_per_minute: DEFAULT_REQUESTS_PER_MINUTE,
            limiter: Mutex::new(LimiterState {
                window_start: Instant::now(),
                sent_in_window: 0,
            }),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Shortens the backoff; used by tests to keep retries fast.
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_requests_per_minute(mut self, limit: u32) -> Self {
        self.requests_per_minute = limit.max(1);
        self
    }

    /// Blocks until the rate limiter admits another request.
    fn wait_for_slot(&self) {
        loop {
            let sleep_for = {
                let mut state = self.limiter.lock().expect("limiter lock poisoned");
                let elapsed = state.window_start.elapsed();
                if elapsed >= Duration::from_secs(60) {
                    state.window_start = Instant::now();
                    state.sent_in_window = 0;
                }
                if state.sent_in_window < self.requests_per_minute {
                    state.sent_in_window += 1;
                    None
                } else {
                    Some(Duration::from_secs(60).saturating_sub(elapsed))
                }
            };
            match sleep_for {
                None => return,
                Some(wait) => std::thread::sleep(wait.min(Duration::from_secs(1))),
            }
        }
    }

    fn post_once(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, RetryOrFail> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage { role: "user", content: prompt }],
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
        };
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|err| {
            if err.is_connect() {
                RetryOrFail::Retry("connect".to_string())
            } else if err.is_timeout() {
                RetryOrFail::Retry("timeout".to_string())
            } else {
                RetryOrFail::Fail(format!("request: {err}"))
            }
        })?;

        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(RetryOrFail::Retry(format!("status {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(RetryOrFail::Fail(format!("status {}", status.as_u16())));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|_| RetryOrFail::Fail("decode".to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| RetryOrFail::Fail("decode".to_string()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        Ok(Completion {
            text: choice.message.content,
            finish_reason,
            tokens_used: parsed.usage.unwrap_or_default().total_tokens,
        })
    }
}

enum RetryOrFail {
    Retry(String),
    Fail(String),
}

impl Backend for HttpBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Completion {
        let mut last_detail = String::new();
        for attempt in 0..=self.max_retries {
            self.wait_for_slot();
            match self.post_once(prompt, params) {
                Ok(completion) => return completion,
                Err(RetryOrFail::Fail(detail)) => return Completion::failure(detail),
                Err(RetryOrFail::Retry(detail)) => {
                    last_detail = detail;
                    if attempt < self.max_retries {
                        std::thread::sleep(self.backoff_base * 2u32.pow(attempt));
                    }
                }
            }
        }
        Completion::failure(if last_detail.starts_with("connect") {
            "connect".to_string()
        } else {
            last_detail
        })
    }
}

/// One-shot convenience wrapper: builds a client for `endpoint` and issues a
/// single generation request.
pub fn http_generate(
    endpoint: &str,
    prompt: &str,
    params: &GenerationParams,
    api_key: Option<&str>,
) -> Completion {
    let mut backend = HttpBackend::new(endpoint);
    if let Some(key) = api_key {
        backend = backend.with_api_key(key);
    }
    backend.generate(prompt, params)
}
