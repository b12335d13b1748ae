//! Query-embedding resolution.
//!
//! The engine never runs an encoder. Query vectors come from, in priority
//! order: an external embedding endpoint (when configured), a precomputed
//! store keyed by `<query_id>::<variant>`, or the built-in token-hash
//! projection embedder. The hash embedder makes secondary retrieval
//! semantically meaningful offline: bag-of-tokens geometry is all the
//! synthetic benchmark needs.

use crate::error::{HiveError, Result};
use crate::ingest::EmbeddingStore;
use crate::provider::http::RetryPolicy;
use crate::vector_index::EmbeddingVector;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::time::Duration;

/// Deterministic bag-of-tokens embedder: each token maps to a seeded signed
/// (±1) projection vector and a text embeds as the multiplicity-weighted sum
/// of its token vectors. Stable across platforms and releases because the
/// expansion is plain SplitMix64 over a SHA-256 token digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0f32; self.dim];
        let lowered = text.to_lowercase();
        for token in lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let mut state = self.token_state(token);
            for slot in acc.iter_mut() {
                *slot += if splitmix64(&mut state) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                };
            }
        }
        EmbeddingVector::new(acc)
    }

    fn token_state(&self, token: &str) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct EmbeddingEndpoint {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbeddingsBody {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

impl EmbeddingEndpoint {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key_env: Option<&str>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                HiveError::AuthConfig(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| HiveError::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            client,
            retry,
        })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let url = format!("{}/embeddings", self.base_url);
        let body = serde_json::json!({ "model": self.model, "input": [text] });
        let mut last_message = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
            let mut builder = self.client.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            let response = match builder.send() {
                Ok(r) => r,
                Err(e) => {
                    last_message = e.to_string();
                    continue;
                }
            };
            let status = response.status();
            if status.as_u16() == 429 || status.is_server_error() {
                last_message = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                return Err(HiveError::MalformedPayload(format!(
                    "embedding endpoint returned HTTP {status}"
                )));
            }
            let parsed: EmbeddingsBody = response
                .json()
                .map_err(|e| HiveError::MalformedPayload(e.to_string()))?;
            let datum = parsed.data.into_iter().next().ok_or_else(|| {
                HiveError::MalformedPayload("embedding response carries no data".to_string())
            })?;
            return Ok(EmbeddingVector::new(datum.embedding));
        }
        Err(HiveError::Transport {
            attempts: self.retry.max_retries + 1,
            message: last_message,
        })
    }
}

/// Short content hash naming a compensatory-query variant.
pub fn variant_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Resolves query vectors from the configured sources in priority order.
pub struct QueryEmbedder {
    pub endpoint: Option<EmbeddingEndpoint>,
    pub store: Option<EmbeddingStore>,
    pub hash: Option<HashEmbedder>,
    pub expected_dim: usize,
}

impl QueryEmbedder {
    pub fn resolve(&self, query_id: &str, variant: &str, text: &str) -> Result<EmbeddingVector> {
        if let Some(endpoint) = &self.endpoint {
            let vector = endpoint.embed(text)?;
            return self.check_dim(query_id, variant, vector);
        }
        if let Some(store) = &self.store {
            if let Some(vector) = store.get_query_variant(query_id, variant) {
                return self.check_dim(query_id, variant, vector.clone());
            }
        }
        if let Some(hash) = &self.hash {
            return self.check_dim(query_id, variant, hash.embed(text));
        }
        Err(HiveError::MissingEmbedding {
            id: crate::ingest::query_variant_key(query_id, variant),
        })
    }

    fn check_dim(
        &self,
        query_id: &str,
        variant: &str,
        vector: EmbeddingVector,
    ) -> Result<EmbeddingVector> {
        if vector.dim() != self.expected_dim {
            return Err(HiveError::DimensionMismatch {
                expected: self.expected_dim,
                got: vector.dim(),
                context: format!("query embedding {query_id}::{variant}"),
            });
        }
        Ok(vector)
    }
}
