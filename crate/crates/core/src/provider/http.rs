//! OpenAI-compatible chat-completions client with retry and an in-flight
//! bound.
//!
//! The wire shape (POST `<base>/chat/completions` with a message list) is
//! the de-facto interop surface for hosted and local models alike, so one
//! client covers GPT-class endpoints, vLLM, llama.cpp, and similar servers.

use super::{ChatProvider, ChatRequest, ChatResponse};
use crate::error::{HiveError, Result};
use serde::Deserialize;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Retry policy for transient failures (transport errors, HTTP 429, 5xx).
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Additional attempts after the first, so `max_retries = 3` allows
    /// four requests total.
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }
}

/// Counting semaphore bounding concurrent remote calls.
#[derive(Debug)]
pub struct InflightGate {
    permits: Mutex<usize>,
    available: Condvar,
}

impl InflightGate {
    pub fn new(limit: usize) -> Self {
        Self {
            permits: Mutex::new(limit.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> InflightPermit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        InflightPermit { gate: self }
    }
}

struct InflightPermit<'a> {
    gate: &'a InflightGate,
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.available.notify_one();
    }
}

/// Settings for a remote endpoint. The credential is read from
/// `api_key_env` at construction time; a missing variable fails before any
/// network traffic. Set `api_key_env` to `None` for unauthenticated local
/// servers.
#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_inflight: usize,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            api_key_env: Some("HIVE_API_KEY".to_string()),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_inflight: 4,
        }
    }
}

pub struct OpenAiCompatProvider {
    id: String,
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
    gate: InflightGate,
}

#[derive(Deserialize)]
struct ChatCompletionBody {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl OpenAiCompatProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                HiveError::AuthConfig(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| HiveError::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            id: format!("openai-compat:{}", config.base_url),
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
            retry: config.retry,
            gate: InflightGate::new(config.max_inflight),
        })
    }

    fn request_body(&self, request: &ChatRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if !request.system_text.is_empty() {
            messages.push(serde_json::json!({
                "role": "system",
                "content": request.system_text,
            }));
        }
        messages.push(serde_json::json!({
            "role": "user",
            "content": request.user_text,
        }));
        serde_json::json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }
}

enum AttemptError {
    Transient(String),
    RateLimited,
    Fatal(HiveError),
}

impl ChatProvider for OpenAiCompatProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let _permit = self.gate.acquire();
        let url = format!("{}/chat/completions", self.base_url);
        let body = self.request_body(request);
        let started = Instant::now();
        let mut rate_limited = false;
        let mut last_transient = String::new();

        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
            match self.attempt(&url, &body) {
                Ok(text) => {
                    return Ok(ChatResponse {
                        text,
                        provider: self.id.clone(),
                        cached: false,
                        latency_ms: started.elapsed().as_millis() as u64,
                        retries: attempt,
                    });
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::RateLimited) => {
                    rate_limited = true;
                    log::warn!("rate limited by {} (attempt {})", self.id, attempt + 1);
                }
                Err(AttemptError::Transient(message)) => {
                    log::warn!(
                        "transient failure from {}: {message} (attempt {})",
                        self.id,
                        attempt + 1
                    );
                    last_transient = message;
                }
            }
        }

        let attempts = self.retry.max_retries + 1;
        if rate_limited {
            Err(HiveError::RateLimited { attempts })
        } else {
            Err(HiveError::Transport {
                attempts,
                message: last_transient,
            })
        }
    }
}

impl OpenAiCompatProvider {
    fn attempt(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> std::result::Result<String, AttemptError> {
        let mut builder = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = response.status();

        if status.as_u16() == 429 {
            return Err(AttemptError::RateLimited);
        }
        if status.is_server_error() {
            return Err(AttemptError::Transient(format!("HTTP {status}")));
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(AttemptError::Fatal(HiveError::AuthRejected {
                status: status.as_u16(),
            }));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(AttemptError::Fatal(HiveError::MalformedPayload(format!(
                "unexpected HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))));
        }

        let parsed: ChatCompletionBody = response
            .json()
            .map_err(|e| AttemptError::Fatal(HiveError::MalformedPayload(e.to_string())))?;
        let text = parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| {
                AttemptError::Fatal(HiveError::MalformedPayload(
                    "response carries no message content".to_string(),
                ))
            })?;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal scripted HTTP/1.1 server for exercising the client.
    fn spawn_stub(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 65536];
                let mut request = Vec::new();
                loop {
                    let n = stream.read(&mut buf).unwrap();
                    request.extend_from_slice(&buf[..n]);
                    if let Some(head_end) = find_header_end(&request) {
                        let head = String::from_utf8_lossy(&request[..head_end]);
                        let content_length = head
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if request.len() >= head_end + 4 + content_length {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reason = match status {
                    200 => "OK",
                    429 => "Too Many Requests",
                    401 => "Unauthorized",
                    500 => "Internal Server Error",
                    _ => "Status",
                };
                let reply = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}"), handle)
    }

    fn find_header_end(bytes: &[u8]) -> Option<usize> {
        bytes.windows(4).position(|w| w == b"\r\n\r\n")
    }

    fn ok_body(text: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}]
        })
        .to_string()
    }

    fn provider_for(base_url: &str) -> OpenAiCompatProvider {
        OpenAiCompatProvider::new(HttpProviderConfig {
            base_url: base_url.to_string(),
            api_key_env: None,
            timeout: Duration::from_secs(5),
            retry: RetryPolicy {
                max_retries: 3,
                base_delay: Duration::from_millis(1),
            },
            max_inflight: 2,
        })
        .unwrap()
    }

    #[test]
    fn missing_credential_fails_before_any_call() {
        let err = OpenAiCompatProvider::new(HttpProviderConfig {
            api_key_env: Some("HIVE_TEST_KEY_THAT_DOES_NOT_EXIST".to_string()),
            ..HttpProviderConfig::default()
        })
        .err()
        .expect("construction must fail without the credential");
        assert!(matches!(err, HiveError::AuthConfig(_)));
    }

    #[test]
    fn retries_through_429_then_succeeds() {
        let (url, handle) = spawn_stub(vec![
            (429, "{}".to_string()),
            (429, "{}".to_string()),
            (429, "{}".to_string()),
            (200, ok_body("recovered")),
        ]);
        let provider = provider_for(&url);
        let response = provider.complete(&ChatRequest::new("m", "hi")).unwrap();
        assert_eq!(response.text, "recovered");
        assert_eq!(response.retries, 3);
        assert_eq!(handle.join().unwrap(), 4);
    }

    #[test]
    fn rate_limit_exhausts_retries() {
        let (url, handle) = spawn_stub(vec![
            (429, "{}".to_string()),
            (429, "{}".to_string()),
            (429, "{}".to_string()),
            (429, "{}".to_string()),
        ]);
        let provider = provider_for(&url);
        let err = provider.complete(&ChatRequest::new("m", "hi")).unwrap_err();
        assert!(matches!(err, HiveError::RateLimited { attempts: 4 }));
        assert_eq!(handle.join().unwrap(), 4);
    }

    #[test]
    fn auth_rejection_does_not_retry() {
        let (url, handle) = spawn_stub(vec![(401, "{}".to_string())]);
        let provider = provider_for(&url);
        let err = provider.complete(&ChatRequest::new("m", "hi")).unwrap_err();
        assert!(matches!(err, HiveError::AuthRejected { status: 401 }));
        assert_eq!(handle.join().unwrap(), 1);
    }

    #[test]
    fn malformed_payload_is_distinguished() {
        let (url, _handle) = spawn_stub(vec![(200, "{\"choices\": []}".to_string())]);
        let provider = provider_for(&url);
        let err = provider.complete(&ChatRequest::new("m", "hi")).unwrap_err();
        assert!(matches!(err, HiveError::MalformedPayload(_)));
    }

    #[test]
    fn server_errors_are_retried() {
        let (url, handle) = spawn_stub(vec![(500, "{}".to_string()), (200, ok_body("ok"))]);
        let provider = provider_for(&url);
        let response = provider.complete(&ChatRequest::new("m", "hi")).unwrap();
        assert_eq!(response.text, "ok");
        assert_eq!(response.retries, 1);
        assert_eq!(handle.join().unwrap(), 2);
    }
}
