//! Uniform interface to a text-generation model: a remote OpenAI-compatible
//! endpoint, a deterministic mock oracle for offline runs, and a persistent
//! response cache keyed by full request content.

pub mod cache;
pub mod http;
pub mod mock;

pub use cache::ResponseCache;
pub use http::OpenAiCompatProvider;
pub use mock::{MockOracle, OracleQueryInfo, OracleState};

use crate::error::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One chat-completion request. Temperature defaults to 0 so runs decode
/// deterministically unless explicitly configured otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            system_text: String::new(),
            user_text: user_text.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }
}

/// A completed request. `text` may be empty on a model refusal; callers
/// treat that as a synthesis/parse failure, not an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub provider: String,
    pub cached: bool,
    pub latency_ms: u64,
    pub retries: u32,
}

/// Content hash identifying a request for caching. Any change to the
/// provider, model, temperature, or either text produces a different key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub digest: String,
}

impl CacheKey {
    pub fn of(provider_id: &str, request: &ChatRequest) -> Self {
        let mut hasher = Sha256::new();
        for field in [
            provider_id,
            &request.model,
            &request.system_text,
            &request.user_text,
        ] {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        hasher.update(request.temperature.to_bits().to_le_bytes());
        Self {
            digest: hex::encode(hasher.finalize()),
        }
    }
}

/// A text-generation backend. Implementations must be safe for concurrent
/// requests.
pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse>;
}

/// Complete through the cache: a hit returns the stored text with
/// `cached = true` and performs zero provider calls; a miss delegates and
/// persists the response. Corrupt cache entries are treated as misses.
pub fn cached_complete(
    cache: &ResponseCache,
    provider: &dyn ChatProvider,
    request: &ChatRequest,
) -> Result<ChatResponse> {
    let key = CacheKey::of(provider.id(), request);
    if let Some(text) = cache.lookup(&key) {
        return Ok(ChatResponse {
            text,
            provider: provider.id().to_string(),
            cached: true,
            latency_ms: 0,
            retries: 0,
        });
    }
    let response = provider.complete(request)?;
    cache.store(&key, request, &response)?;
    Ok(response)
}
