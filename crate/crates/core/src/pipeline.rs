//! The four-stage retrieval pipeline: probe retrieval, compensatory query
//! synthesis, secondary retrieval, and verification/reranking.
//!
//! Stages within one query run strictly in sequence (each conditions on the
//! previous); distinct queries are independent and run in parallel up to a
//! configured bound. Stage toggles realize the ablation configurations; a
//! disabled verify stage leaves the pool in union order under residual
//! scores, so the engine always returns a full ranking.

use crate::embed::{variant_hash, QueryEmbedder};
use crate::error::{HiveError, Result};
use crate::ingest::QueryRecord;
use crate::prompts::{prompt_digest, PromptSet};
use crate::provider::{cached_complete, ChatProvider, ChatRequest, ResponseCache};
use crate::trace::{FallbackEvent, QueryTimings, RunTimings, StageTrace};
use crate::vector_index::{Index, ScoredHit};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::time::Instant;

/// Separator between the text query and the image caption when forming the
/// retrieval query input.
pub const IMAGE_SEPARATOR: &str = "\n[IMAGE] ";

/// Which pipeline stages run. Stage 1 (probe retrieval) always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSet {
    pub synthesis: bool,
    pub secondary: bool,
    pub verify: bool,
}

impl StageSet {
    pub const NONE: StageSet = StageSet {
        synthesis: false,
        secondary: false,
        verify: false,
    };
    pub const ALL: StageSet = StageSet {
        synthesis: true,
        secondary: true,
        verify: true,
    };
}

/// How the candidate pool is assembled from the two retrieval passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    /// Probe results first, then unseen secondary results in order.
    Union,
    /// Secondary results alone (the "stage 2 only" ablation).
    SecondaryOnly,
}

/// All knobs of one pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k1: usize,
    pub k2: usize,
    pub k_f: usize,
    pub s_max: i64,
    pub s_base: i64,
    pub stages: StageSet,
    pub pool_policy: PoolPolicy,
    pub temperature: f64,
    pub seed: u64,
    /// Concatenate the image caption to the compensatory query before the
    /// secondary embedding, mirroring how the original query is formed.
    pub caption_in_secondary: bool,
    pub model: String,
    pub max_output_tokens: u32,
    pub per_doc_chars: usize,
    pub prompt_chars: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k1: 5,
            k2: 50,
            k_f: 10,
            s_max: 1000,
            s_base: 500,
            stages: StageSet::ALL,
            pool_policy: PoolPolicy::Union,
            temperature: 0.0,
            seed: 0,
            caption_in_secondary: true,
            model: "gpt-4o".to_string(),
            max_output_tokens: 1024,
            per_doc_chars: 2000,
            prompt_chars: 60000,
        }
    }
}

impl PipelineConfig {
    /// Enforce the structural invariants that make the fixed-constant
    /// scoring sound: the final list must fit in the pool and every
    /// reranked document must outscore every residual document.
    pub fn validate(&self) -> Result<()> {
        if self.k1 == 0 || self.k2 == 0 || self.k_f == 0 {
            return Err(HiveError::InvalidConfig(
                "k1, k2 and k_f must be positive".to_string(),
            ));
        }
        if self.k_f > self.k1 + self.k2 {
            return Err(HiveError::InvalidConfig(format!(
                "k_f ({}) exceeds the maximum pool size k1 + k2 ({})",
                self.k_f,
                self.k1 + self.k2
            )));
        }
        if self.k_f > self.k2 {
            return Err(HiveError::InvalidConfig(format!(
                "k_f ({}) exceeds k2 ({}); the secondary pass could not fill the final list",
                self.k_f, self.k2
            )));
        }
        let pool_max = (self.k1 + self.k2) as i64;
        if self.s_base + pool_max > self.s_max - self.k_f as i64 {
            return Err(HiveError::InvalidConfig(format!(
                "score separation violated: s_base ({}) + k1 + k2 ({pool_max}) must be <= s_max ({}) - k_f ({})",
                self.s_base, self.s_max, self.k_f
            )));
        }
        if self.temperature < 0.0 {
            return Err(HiveError::InvalidConfig(
                "temperature must be >= 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// Full query input: text plus the image caption when present.
pub fn form_query_text(q: &QueryRecord) -> String {
    if q.image_caption.is_empty() {
        q.text.clone()
    } else {
        format!("{}{IMAGE_SEPARATOR}{}", q.text, q.image_caption)
    }
}

/// Order-preserving union: all ids of `d1` in order, then ids of `d2` not
/// already present, in order.
pub fn union_dedup(d1: &[String], d2: &[String]) -> Vec<String> {
    let mut seen = HashSet::with_capacity(d1.len() + d2.len());
    let mut out = Vec::with_capacity(d1.len() + d2.len());
    for id in d1.iter().chain(d2.iter()) {
        if seen.insert(id.as_str()) {
            out.push(id.clone());
        }
    }
    out
}

/// Final scoring: the document at 1-based position i of `ranked` scores
/// `s_max - i`; pool documents the verifier did not place score
/// `s_base - j` by their 1-based position in the residual list (pool order
/// with ranked ids removed). Output covers the whole pool, score descending.
pub fn assign_scores(
    ranked: &[String],
    pool: &[String],
    config: &PipelineConfig,
) -> Result<Vec<(String, i64)>> {
    let pool_set: HashSet<&str> = pool.iter().map(String::as_str).collect();
    let mut ranked_set = HashSet::with_capacity(ranked.len());
    for id in ranked {
        if !pool_set.contains(id.as_str()) {
            return Err(HiveError::Internal(format!(
                "ranked id '{id}' is not in the candidate pool"
            )));
        }
        if !ranked_set.insert(id.as_str()) {
            return Err(HiveError::Internal(format!("ranked id '{id}' duplicated")));
        }
    }

    let mut out = Vec::with_capacity(pool.len());
    for (i, id) in ranked.iter().enumerate() {
        out.push((id.clone(), config.s_max - (i as i64 + 1)));
    }
    let mut offset = 0i64;
    for id in pool {
        if !ranked_set.contains(id.as_str()) {
            offset += 1;
            out.push((id.clone(), config.s_base - offset));
        }
    }
    debug_assert!(out.windows(2).all(|w| w[0].1 > w[1].1));
    Ok(out)
}

/// A fully wired pipeline: index, corpus texts, provider, embedder,
/// templates, and configuration. Safe to share across worker threads.
pub struct Engine {
    pub index: Index,
    pub doc_texts: HashMap<String, String>,
    pub provider: Box<dyn ChatProvider>,
    pub cache: Option<ResponseCache>,
    pub embedder: QueryEmbedder,
    pub prompts: PromptSet,
    pub config: PipelineConfig,
}

/// Everything a batch produces besides the files: ordered traces, aggregate
/// timings, and the collected per-query failures.
#[derive(Debug)]
pub struct BatchOutput {
    pub traces: Vec<StageTrace>,
    pub timings: RunTimings,
    pub failed_queries: Vec<(String, String)>,
}

enum SynthesisOutcome {
    /// The LLM produced a compensatory query.
    Synthesized(String),
    /// Synthesis failed or was skipped; secondary retrieval falls back to
    /// the original query input.
    Fallback(String),
}

impl Engine {
    fn chat(&self, user_text: String) -> Result<crate::provider::ChatResponse> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            system_text: String::new(),
            user_text,
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
        };
        match &self.cache {
            Some(cache) => cached_complete(cache, self.provider.as_ref(), &request),
            None => self.provider.complete(&request),
        }
    }

    fn doc_text(&self, id: &str) -> &str {
        self.doc_texts.get(id).map(String::as_str).unwrap_or("")
    }

    fn docs_for_prompt<'a>(&'a self, hits: &'a [ScoredHit]) -> Vec<(&'a str, &'a str)> {
        hits.iter()
            .map(|h| (h.doc_id.as_str(), self.doc_text(&h.doc_id)))
            .collect()
    }

    fn ids_for_prompt<'a>(&'a self, ids: &'a [String]) -> Vec<(&'a str, &'a str)> {
        ids.iter()
            .map(|id| (id.as_str(), self.doc_text(id)))
            .collect()
    }

    /// Run every enabled stage for one query. Recoverable problems are
    /// recorded as fallback events; only unrecoverable provider or
    /// configuration failures set `error` (and such a query is skipped by
    /// evaluation).
    pub fn run_query(&self, q: &QueryRecord) -> (StageTrace, QueryTimings) {
        let mut trace = StageTrace {
            query_id: q.query_id.clone(),
            domain: q.domain.clone(),
            ..StageTrace::default()
        };
        let mut timings = QueryTimings::default();

        let query_text = form_query_text(q);
        if query_text.is_empty() {
            trace.degenerate = true;
            trace.llm_failures.push(FallbackEvent {
                stage: "input".to_string(),
                kind: "degenerate_query".to_string(),
                detail: "both query text and caption are empty; emitting an empty ranking"
                    .to_string(),
            });
            return (trace, timings);
        }

        // Stage 1: probe retrieval.
        let started = Instant::now();
        let d1 = match self
            .embedder
            .resolve(&q.query_id, "original", &query_text)
            .and_then(|vec| self.index.top_k(&vec, self.config.k1))
        {
            Ok(hits) => hits,
            Err(e) => {
                trace.error = Some(format!("stage1: {e}"));
                return (trace, timings);
            }
        };
        timings.stage1_ms = started.elapsed().as_millis() as u64;
        trace.pool.d1 = d1;

        // Stage 2: compensatory query synthesis.
        let started = Instant::now();
        let synthesis = if !self.config.stages.synthesis {
            SynthesisOutcome::Fallback(query_text.clone())
        } else if trace.pool.d1.is_empty() {
            trace.llm_failures.push(FallbackEvent {
                stage: "synthesis".to_string(),
                kind: "empty_probe".to_string(),
                detail: "no probe documents; falling back to the original query".to_string(),
            });
            SynthesisOutcome::Fallback(query_text.clone())
        } else {
            let prompt = self.prompts.build_hypothesis_prompt(
                &q.text,
                &q.image_caption,
                &self.docs_for_prompt(&trace.pool.d1),
            );
            trace.hypothesis_prompt_digest = Some(prompt_digest(&prompt));
            match self.chat(prompt) {
                Ok(response) => match crate::prompts::parse_compensatory_query(&response.text) {
                    Some(compensatory) => SynthesisOutcome::Synthesized(compensatory),
                    None => {
                        trace.llm_failures.push(FallbackEvent {
                            stage: "synthesis".to_string(),
                            kind: "parse_failure".to_string(),
                            detail: "no compensatory query in the model output".to_string(),
                        });
                        SynthesisOutcome::Fallback(query_text.clone())
                    }
                },
                Err(e) => {
                    trace.error = Some(format!("stage2: {e}"));
                    return (trace, timings);
                }
            }
        };
        timings.stage2_ms = started.elapsed().as_millis() as u64;
        if self.config.stages.synthesis {
            trace.pool.compensatory_query = Some(match &synthesis {
                SynthesisOutcome::Synthesized(s) | SynthesisOutcome::Fallback(s) => s.clone(),
            });
        }

        // Stage 3: secondary retrieval with the compensatory query.
        if self.config.stages.secondary {
            let started = Instant::now();
            let embed_text = match &synthesis {
                SynthesisOutcome::Synthesized(compensatory) => {
                    if self.config.caption_in_secondary && !q.image_caption.is_empty() {
                        format!("{compensatory}{IMAGE_SEPARATOR}{}", q.image_caption)
                    } else {
                        compensatory.clone()
                    }
                }
                // The fallback is already the full query input; re-appending
                // the caption would double it.
                SynthesisOutcome::Fallback(original) => original.clone(),
            };
            let variant = format!("compensatory:{}", variant_hash(&embed_text));
            match self
                .embedder
                .resolve(&q.query_id, &variant, &embed_text)
                .and_then(|vec| self.index.top_k(&vec, self.config.k2))
            {
                Ok(hits) => trace.pool.d2 = hits,
                Err(e) => {
                    trace.error = Some(format!("stage3: {e}"));
                    return (trace, timings);
                }
            }
            timings.stage3_ms = started.elapsed().as_millis() as u64;
        }

        let d1_ids: Vec<String> = trace.pool.d1.iter().map(|h| h.doc_id.clone()).collect();
        let d2_ids: Vec<String> = trace.pool.d2.iter().map(|h| h.doc_id.clone()).collect();
        trace.pool.union_ids = match self.config.pool_policy {
            PoolPolicy::Union => union_dedup(&d1_ids, &d2_ids),
            PoolPolicy::SecondaryOnly => d2_ids.clone(),
        };

        // Stage 4: verification and reranking over the pool.
        let mut ranked: Vec<String> = Vec::new();
        if self.config.stages.verify && !trace.pool.union_ids.is_empty() {
            let started = Instant::now();
            let pool_ids = trace.pool.union_ids.clone();
            match self.verify_with_retry(q, &pool_ids, &mut trace) {
                Ok(list) => ranked = list,
                Err(e) => {
                    trace.error = Some(format!("stage4: {e}"));
                    return (trace, timings);
                }
            }
            timings.stage4_ms = started.elapsed().as_millis() as u64;
            trace.verify_ranked = Some(ranked.clone());
        }

        match assign_scores(&ranked, &trace.pool.union_ids, &self.config) {
            Ok(final_ranking) => trace.final_ranking = final_ranking,
            Err(e) => trace.error = Some(format!("scoring: {e}")),
        }
        (trace, timings)
    }

    /// One verify call plus one re-ask on parse failure; after that, fall
    /// back to the head of the pool in union order.
    fn verify_with_retry(
        &self,
        q: &QueryRecord,
        pool: &[String],
        trace: &mut StageTrace,
    ) -> Result<Vec<String>> {
        let valid: HashSet<String> = pool.iter().cloned().collect();
        let prompt = self.prompts.build_verify_prompt(
            &q.text,
            &q.image_caption,
            &self.ids_for_prompt(pool),
            self.config.k_f,
        );
        trace.verify_prompt_digest = Some(prompt_digest(&prompt));

        let response = self.chat(prompt.clone())?;
        if let Some(list) =
            crate::prompts::parse_ranked_list(&response.text, &valid, self.config.k_f)
        {
            if !list.is_empty() {
                return Ok(list);
            }
        }
        trace.llm_failures.push(FallbackEvent {
            stage: "verify".to_string(),
            kind: "parse_failure".to_string(),
            detail: "no usable ranking in the model output; re-asking".to_string(),
        });

        let nudged =
            format!("{prompt}\n\nREMINDER: respond with a JSON array of document id strings only.");
        let response = self.chat(nudged)?;
        if let Some(list) =
            crate::prompts::parse_ranked_list(&response.text, &valid, self.config.k_f)
        {
            if !list.is_empty() {
                return Ok(list);
            }
        }
        trace.llm_failures.push(FallbackEvent {
            stage: "verify".to_string(),
            kind: "fallback_to_pool_order".to_string(),
            detail: "re-ask also unusable; taking the pool head".to_string(),
        });
        Ok(pool.iter().take(self.config.k_f).cloned().collect())
    }

    /// Process queries with bounded parallelism. Individual query failures
    /// are collected, not fatal; trace order always matches input order.
    pub fn run_batch(&self, queries: &[QueryRecord], jobs: usize) -> Result<BatchOutput> {
        let wall = Instant::now();
        let results: Vec<(StageTrace, QueryTimings)> = if jobs <= 1 {
            queries.iter().map(|q| self.run_query(q)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| HiveError::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| {
                use rayon::prelude::*;
                queries.par_iter().map(|q| self.run_query(q)).collect()
            })
        };

        let mut timings = RunTimings::default();
        let mut traces = Vec::with_capacity(results.len());
        let mut failed_queries = Vec::new();
        for (trace, t) in results {
            timings.absorb(t);
            if let Some(error) = &trace.error {
                log::warn!("query {} failed: {error}", trace.query_id);
                failed_queries.push((trace.query_id.clone(), error.clone()));
            }
            traces.push(trace);
        }
        timings.wall_ms = wall.elapsed().as_millis() as u64;
        Ok(BatchOutput {
            traces,
            timings,
            failed_queries,
        })
    }
}
