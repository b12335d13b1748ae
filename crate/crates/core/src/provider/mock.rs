//! Deterministic mock oracle standing in for the LLM during offline runs.
//!
//! The oracle deliberately sees ground truth: its job is to verify the
//! pipeline's plumbing and the architectural claim that a correct
//! compensatory signal improves ranking, not to simulate LLM fallibility.
//! For robustness experiments a noise setting flips a configurable fraction
//! of adjacent ranking decisions using the run seed.

use super::{ChatProvider, ChatRequest, ChatResponse};
use crate::error::{HiveError, Result};
use crate::prompts::{
    extract_doc_ids, extract_requested_count, extract_section, HYPOTHESIS_SENTINEL,
    QUERY_TEXT_HEADER, VERIFY_SENTINEL,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Ground truth for one benchmark query, keyed by its query text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleQueryInfo {
    pub query_id: String,
    pub gap_terms: Vec<String>,
}

/// Everything the mock oracle needs to answer both prompt kinds: the planted
/// gap terms per query and the relevance judgments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleState {
    /// query text -> info. The hypothesis prompt carries the query text, so
    /// this is how the oracle recognizes which query it is being asked about.
    pub queries: BTreeMap<String, OracleQueryInfo>,
    /// query id -> doc id -> grade.
    pub qrels: BTreeMap<String, BTreeMap<String, u32>>,
}

impl OracleState {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| HiveError::io(format!("reading oracle state {}", path.display()), e))?;
        serde_json::from_slice(&bytes).map_err(|e| HiveError::Json {
            context: format!("parsing oracle state {}", path.display()),
            source: e,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let body = serde_json::to_vec_pretty(self).map_err(|e| HiveError::Json {
            context: "serializing oracle state".to_string(),
            source: e,
        })?;
        std::fs::write(path, body)
            .map_err(|e| HiveError::io(format!("writing oracle state {}", path.display()), e))
    }
}

pub struct MockOracle {
    state: OracleState,
    noise: f64,
    seed: u64,
}

impl MockOracle {
    pub fn new(state: OracleState) -> Self {
        Self {
            state,
            noise: 0.0,
            seed: 0,
        }
    }

    /// Flip roughly `noise` of adjacent ranking pairs, deterministically per
    /// (seed, query). Zero keeps the oracle perfect.
    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        self.noise = noise.clamp(0.0, 1.0);
        self.seed = seed;
        self
    }

    fn query_info(&self, prompt: &str) -> Result<&OracleQueryInfo> {
        let query_text = extract_section(prompt, QUERY_TEXT_HEADER).ok_or_else(|| {
            HiveError::OracleMismatch("prompt lacks a QUERY TEXT section".to_string())
        })?;
        self.state
            .queries
            .get(query_text)
            .ok_or_else(|| HiveError::OracleMismatch(format!("unknown query text '{query_text}'")))
    }

    fn answer_hypothesis(&self, prompt: &str) -> Result<String> {
        let info = self.query_info(prompt)?;
        let compensatory = info.gap_terms.join(" ");
        Ok(format!(
            "The image carries specifics the probe documents do not cover.\n\
             COMPENSATORY QUERY: {compensatory}"
        ))
    }

    fn answer_verify(&self, prompt: &str) -> Result<String> {
        let info = self.query_info(prompt)?;
        let candidates = extract_doc_ids(prompt);
        if candidates.is_empty() {
            return Err(HiveError::OracleMismatch(
                "verify prompt lists no candidates".to_string(),
            ));
        }
        let k = extract_requested_count(prompt).unwrap_or(candidates.len());
        let grades = self.state.qrels.get(&info.query_id);

        let mut ranked: Vec<(u32, String)> = candidates
            .into_iter()
            .map(|id| {
                let grade = grades.and_then(|g| g.get(&id)).copied().unwrap_or(0);
                (grade, id)
            })
            .collect();
        // Grade descending, then doc id ascending.
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        ranked.truncate(k);
        let mut ids: Vec<String> = ranked.into_iter().map(|(_, id)| id).collect();

        if self.noise > 0.0 && ids.len() > 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(info.query_id.as_bytes()));
            for i in 0..ids.len() - 1 {
                if rng.random::<f64>() < self.noise {
                    ids.swap(i, i + 1);
                }
            }
        }

        let array = serde_json::to_string(&ids).expect("string vec always serializes");
        Ok(format!(
            "Checked every candidate against the stated intent.\n{array}"
        ))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl ChatProvider for MockOracle {
    fn id(&self) -> &str {
        "mock-oracle"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let text = if request.user_text.contains(HYPOTHESIS_SENTINEL) {
            self.answer_hypothesis(&request.user_text)?
        } else if request.user_text.contains(VERIFY_SENTINEL) {
            self.answer_verify(&request.user_text)?
        } else {
            return Err(HiveError::OracleMismatch(
                "request carries no known sentinel marker".to_string(),
            ));
        };
        Ok(ChatResponse {
            text,
            provider: self.id().to_string(),
            cached: false,
            latency_ms: 0,
            retries: 0,
        })
    }
}
