//! Pipeline behavior under real and degenerate providers: fallback paths,
//! ablation coherence, per-query failure isolation, and the retrieval
//! semantics of the secondary pass.

use hive_core::embed::{HashEmbedder, QueryEmbedder};
use hive_core::eval::{evaluate_traces, GainFunction};
use hive_core::ingest::{QueryRecord, StoreKind};
use hive_core::pipeline::{Engine, PipelineConfig, StageSet};
use hive_core::prompts::{extract_section, PromptSet, QUERY_TEXT_HEADER};
use hive_core::provider::{ChatProvider, ChatRequest, ChatResponse, MockOracle};
use hive_core::synthbench::{generate, SynthBenchmark, SynthSpec};
use hive_core::vector_index::Index;
use std::collections::HashMap;

fn small_spec(gap_strength: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        n_docs: 300,
        n_queries: 30,
        dim: 96,
        vocab_size: 900,
        gap_strength,
        distractors_per_query: 8,
        domains: vec!["a".to_string(), "b".to_string()],
    }
}

/// Provider returning fixed text per request kind.
struct ScriptedProvider {
    hypothesis_reply: String,
    verify_reply: String,
}

impl ChatProvider for ScriptedProvider {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> hive_core::Result<ChatResponse> {
        let text = if request.user_text.contains("[[HIVE-HYPOTHESIS-V1]]") {
            self.hypothesis_reply.clone()
        } else {
            self.verify_reply.clone()
        };
        Ok(ChatResponse {
            text,
            provider: "scripted".to_string(),
            cached: false,
            latency_ms: 0,
            retries: 0,
        })
    }
}

/// Provider that answers synthesis requests with the query text itself.
struct EchoQueryProvider;

impl ChatProvider for EchoQueryProvider {
    fn id(&self) -> &str {
        "echo-query"
    }

    fn complete(&self, request: &ChatRequest) -> hive_core::Result<ChatResponse> {
        let query_text = extract_section(&request.user_text, QUERY_TEXT_HEADER).unwrap_or("");
        Ok(ChatResponse {
            text: format!("COMPENSATORY QUERY: {query_text}"),
            provider: "echo-query".to_string(),
            cached: false,
            latency_ms: 0,
            retries: 0,
        })
    }
}

fn engine_for(
    bench: &SynthBenchmark,
    provider: Box<dyn ChatProvider>,
    config: PipelineConfig,
) -> Engine {
    let index = Index::build(&bench.docs, &bench.doc_store).unwrap();
    let doc_texts: HashMap<String, String> = bench
        .docs
        .iter()
        .map(|d| (d.doc_id.clone(), d.text.clone()))
        .collect();
    Engine {
        index,
        doc_texts,
        provider,
        cache: None,
        embedder: QueryEmbedder {
            endpoint: None,
            store: Some(bench.query_store.clone()),
            hash: Some(HashEmbedder::new(bench.spec.dim, bench.spec.seed)),
            expected_dim: bench.spec.dim,
        },
        prompts: PromptSet::default(),
        config,
    }
}

fn default_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        ..PipelineConfig::default()
    }
}

#[test]
fn empty_synthesis_output_falls_back_to_original_query() {
    let spec = small_spec(1.0, 51);
    let bench = generate(&spec).unwrap();
    let provider = ScriptedProvider {
        hypothesis_reply: "   \n\n  ".to_string(),
        verify_reply: "no array here either".to_string(),
    };
    let engine = engine_for(&bench, Box::new(provider), default_config(spec.seed));

    let (trace, _) = engine.run_query(&bench.queries[0]);
    assert!(trace.error.is_none());
    let expected_fallback = format!(
        "{}\n[IMAGE] {}",
        bench.queries[0].text, bench.queries[0].image_caption
    );
    assert_eq!(
        trace.pool.compensatory_query.as_deref(),
        Some(expected_fallback.as_str())
    );
    assert!(trace
        .llm_failures
        .iter()
        .any(|f| f.stage == "synthesis" && f.kind == "parse_failure"));
}

#[test]
fn unparseable_verify_twice_falls_back_to_pool_head() {
    let spec = small_spec(1.0, 52);
    let bench = generate(&spec).unwrap();
    let provider = ScriptedProvider {
        hypothesis_reply: "COMPENSATORY QUERY: something plausible".to_string(),
        verify_reply: "I refuse to emit JSON.".to_string(),
    };
    let config = default_config(spec.seed);
    let engine = engine_for(&bench, Box::new(provider), config.clone());

    let (trace, _) = engine.run_query(&bench.queries[0]);
    assert!(trace.error.is_none());
    let fallbacks: Vec<&str> = trace
        .llm_failures
        .iter()
        .filter(|f| f.stage == "verify")
        .map(|f| f.kind.as_str())
        .collect();
    assert_eq!(fallbacks, vec!["parse_failure", "fallback_to_pool_order"]);
    let expected: Vec<String> = trace
        .pool
        .union_ids
        .iter()
        .take(config.k_f)
        .cloned()
        .collect();
    assert_eq!(trace.verify_ranked.as_deref(), Some(expected.as_slice()));
}

#[test]
fn compensatory_equal_to_query_text_extends_the_probe_ranking() {
    let spec = small_spec(0.5, 53);
    let bench = generate(&spec).unwrap();
    let mut config = default_config(spec.seed);
    config.stages = StageSet {
        synthesis: true,
        secondary: true,
        verify: false,
    };
    let engine = engine_for(&bench, Box::new(EchoQueryProvider), config.clone());

    for query in bench.queries.iter().take(10) {
        let (trace, _) = engine.run_query(query);
        assert!(trace.error.is_none());
        // q-hat == q_t, so the secondary embedding equals the original
        // query input and D2 is the deeper cut of the same ranking.
        let d1_ids: Vec<&str> = trace.pool.d1.iter().map(|h| h.doc_id.as_str()).collect();
        let d2_prefix: Vec<&str> = trace
            .pool
            .d2
            .iter()
            .take(d1_ids.len())
            .map(|h| h.doc_id.as_str())
            .collect();
        assert_eq!(d1_ids, d2_prefix, "query {}", query.query_id);
        assert_eq!(trace.pool.d2.len(), config.k2.min(bench.docs.len()));
        // Union adds nothing beyond D2 here.
        assert_eq!(trace.pool.union_ids.len(), trace.pool.d2.len());
    }
}

#[test]
fn ablation_coherence_in_traces() {
    let spec = small_spec(1.0, 54);
    let bench = generate(&spec).unwrap();

    // Synthesis disabled: no compensatory query, no hypothesis digest.
    let mut config = default_config(spec.seed);
    config.stages = StageSet {
        synthesis: false,
        secondary: false,
        verify: true,
    };
    let engine = engine_for(
        &bench,
        Box::new(MockOracle::new(bench.oracle.clone())),
        config,
    );
    let (trace, _) = engine.run_query(&bench.queries[0]);
    assert!(trace.pool.compensatory_query.is_none());
    assert!(trace.hypothesis_prompt_digest.is_none());
    assert!(trace.verify_prompt_digest.is_some());
    assert!(trace.pool.d2.is_empty());

    // Verify disabled: no verify digest, no ranked list.
    let mut config = default_config(spec.seed);
    config.stages = StageSet {
        synthesis: true,
        secondary: true,
        verify: false,
    };
    let engine = engine_for(
        &bench,
        Box::new(MockOracle::new(bench.oracle.clone())),
        config,
    );
    let (trace, _) = engine.run_query(&bench.queries[0]);
    assert!(trace.verify_prompt_digest.is_none());
    assert!(trace.verify_ranked.is_none());
    assert!(trace.pool.compensatory_query.is_some());
    assert!(trace.hypothesis_prompt_digest.is_some());
}

#[test]
fn missing_query_embedding_is_isolated() {
    let spec = small_spec(1.0, 55);
    let bench = generate(&spec).unwrap();
    let index = Index::build(&bench.docs, &bench.doc_store).unwrap();

    // Store-only resolution, with one query's entry removed.
    let victim = bench.queries[7].query_id.clone();
    let mut store = hive_core::ingest::EmbeddingStore::new(StoreKind::Query);
    for (id, vector) in bench.query_store.entries() {
        if !id.starts_with(&format!("{victim}::")) {
            store.insert(id.to_string(), vector.clone()).unwrap();
        }
    }

    let mut config = default_config(spec.seed);
    config.stages = StageSet::NONE;
    let engine = Engine {
        index,
        doc_texts: bench
            .docs
            .iter()
            .map(|d| (d.doc_id.clone(), d.text.clone()))
            .collect(),
        provider: Box::new(MockOracle::new(bench.oracle.clone())),
        cache: None,
        embedder: QueryEmbedder {
            endpoint: None,
            store: Some(store),
            hash: None,
            expected_dim: spec.dim,
        },
        prompts: PromptSet::default(),
        config,
    };

    let batch = engine.run_batch(&bench.queries, 1).unwrap();
    assert_eq!(batch.traces.len(), 30);
    assert_eq!(batch.failed_queries.len(), 1);
    assert_eq!(batch.failed_queries[0].0, victim);
    let failed_trace = batch.traces.iter().find(|t| t.query_id == victim).unwrap();
    assert!(failed_trace.error.is_some());
    assert!(failed_trace.final_ranking.is_empty());
    assert!(batch
        .traces
        .iter()
        .filter(|t| t.query_id != victim)
        .all(|t| t.error.is_none() && !t.final_ranking.is_empty()));
}

#[test]
fn degenerate_query_yields_empty_ranking() {
    let spec = small_spec(1.0, 56);
    let bench = generate(&spec).unwrap();
    let engine = engine_for(
        &bench,
        Box::new(MockOracle::new(bench.oracle.clone())),
        default_config(spec.seed),
    );
    let empty = QueryRecord {
        query_id: "q_empty".to_string(),
        text: String::new(),
        image_caption: String::new(),
        image_ref: None,
        domain: "a".to_string(),
    };
    let (trace, _) = engine.run_query(&empty);
    assert!(trace.degenerate);
    assert!(trace.error.is_none());
    assert!(trace.final_ranking.is_empty());
    assert!(trace
        .llm_failures
        .iter()
        .any(|f| f.kind == "degenerate_query"));
}

#[test]
fn empty_corpus_produces_empty_rankings_without_errors() {
    let spec = small_spec(1.0, 58);
    let bench = generate(&spec).unwrap();
    let empty_store = hive_core::ingest::EmbeddingStore::new(StoreKind::Document);
    let index = Index::build(&[], &empty_store).unwrap();
    let engine = Engine {
        index,
        doc_texts: HashMap::new(),
        provider: Box::new(MockOracle::new(bench.oracle.clone())),
        cache: None,
        embedder: QueryEmbedder {
            endpoint: None,
            store: None,
            hash: Some(HashEmbedder::new(spec.dim, spec.seed)),
            expected_dim: spec.dim,
        },
        prompts: PromptSet::default(),
        config: default_config(spec.seed),
    };
    let (trace, _) = engine.run_query(&bench.queries[0]);
    assert!(trace.error.is_none());
    assert!(trace.pool.d1.is_empty());
    assert!(trace.pool.d2.is_empty());
    assert!(trace.final_ranking.is_empty());
    // Synthesis was skipped for lack of probe documents and fell back to
    // the original query input.
    assert!(trace
        .llm_failures
        .iter()
        .any(|f| f.stage == "synthesis" && f.kind == "empty_probe"));
    let expected = format!(
        "{}\n[IMAGE] {}",
        bench.queries[0].text, bench.queries[0].image_caption
    );
    assert_eq!(
        trace.pool.compensatory_query.as_deref(),
        Some(expected.as_str())
    );
    assert!(trace.verify_prompt_digest.is_none());
}

/// Base-retriever quality decays as the planted gap widens; the decay is
/// what the later stages exist to repair.
#[test]
fn base_ndcg_decreases_with_gap_strength() {
    let mut scores = Vec::new();
    for gap in [0.0, 0.5, 1.0] {
        let spec = small_spec(gap, 57);
        let bench = generate(&spec).unwrap();
        let mut config = default_config(spec.seed);
        config.stages = StageSet::NONE;
        config.k1 = config.k1.max(config.k_f);
        let engine = engine_for(
            &bench,
            Box::new(MockOracle::new(bench.oracle.clone())),
            config,
        );
        let batch = engine.run_batch(&bench.queries, 1).unwrap();
        let results = evaluate_traces(&batch.traces, &bench.qrels, 10, GainFunction::Exponential);
        let mean = results.iter().map(|r| r.ndcg_at_k).sum::<f64>() / results.len() as f64;
        scores.push(mean);
    }
    assert!(
        scores[0] > scores[1] && scores[1] > scores[2],
        "base nDCG not monotone over gap strengths: {scores:?}"
    );
}
