//! Deterministic synthetic benchmarks with planted visual gaps.
//!
//! Each query gets one relevant document reachable through the image
//! caption's vocabulary but (at full gap strength) not through the text
//! query's, plus distractors that share the text query's vocabulary. The
//! base retriever therefore misses the relevant document on the first pass
//! while a caption-informed compensatory query recovers it — the failure
//! mode the two-pass architecture exists to fix, reproduced offline.
//!
//! Everything derives from the spec seed: vocabulary, document composition,
//! domains, and the token-hash embeddings. Same spec, same bytes.

use crate::embed::HashEmbedder;
use crate::error::{HiveError, Result};
use crate::ingest::{
    query_variant_key, DocumentRecord, EmbeddingStore, QrelsTable, QueryRecord, StoreKind,
};
use crate::pipeline::form_query_text;
use crate::provider::{OracleQueryInfo, OracleState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

const TOPIC_TERMS_PER_QUERY: usize = 5;
const GAP_TERMS_PER_QUERY: usize = 3;
/// Topical terms appear twice in the query text and planted documents
/// repeat their signal terms, so shared-token mass separates cleanly from
/// projection noise at the default dimension.
const SIGNAL_REPEAT: usize = 2;
const DISTRACTOR_TOPIC_TERMS: usize = 3;
/// Occurrence count (with multiplicity) every generated document is padded
/// to, keeping norms comparable.
const DOC_WEIGHTED_TOKENS: usize = 16;
const MIN_FILLER_VOCAB: usize = 200;

/// Parameters of one synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_docs: usize,
    pub n_queries: usize,
    pub dim: usize,
    pub vocab_size: usize,
    /// Fraction of the relevance signal carried only by caption/gap terms.
    /// 0 degenerates to a benchmark the first pass solves alone.
    pub gap_strength: f64,
    pub distractors_per_query: usize,
    pub domains: Vec<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_docs: 5000,
            n_queries: 200,
            dim: 128,
            vocab_size: 8000,
            gap_strength: 1.0,
            distractors_per_query: 8,
            domains: vec![
                "circuits".to_string(),
                "charts".to_string(),
                "diagrams".to_string(),
                "screens".to_string(),
            ],
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(HiveError::InvalidConfig(
                "dim must be at least 8".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gap_strength) {
            return Err(HiveError::InvalidConfig(
                "gap_strength must lie in [0, 1]".to_string(),
            ));
        }
        if self.domains.is_empty() {
            return Err(HiveError::InvalidConfig(
                "at least one domain label required".to_string(),
            ));
        }
        if self.n_queries == 0 {
            return Err(HiveError::InvalidConfig(
                "n_queries must be positive".to_string(),
            ));
        }
        let reserved = self.n_queries * (TOPIC_TERMS_PER_QUERY + GAP_TERMS_PER_QUERY);
        if self.vocab_size < reserved + MIN_FILLER_VOCAB {
            return Err(HiveError::InvalidConfig(format!(
                "vocab_size {} too small: {} queries need {} disjoint terms plus {} filler",
                self.vocab_size, self.n_queries, reserved, MIN_FILLER_VOCAB
            )));
        }
        let planted = self.n_queries * (1 + self.distractors_per_query);
        if self.n_docs < planted {
            return Err(HiveError::InvalidConfig(format!(
                "n_docs {} too small for {planted} planted documents",
                self.n_docs
            )));
        }
        Ok(())
    }
}

/// A generated benchmark, in memory.
#[derive(Debug, Clone)]
pub struct SynthBenchmark {
    pub spec: SynthSpec,
    pub docs: Vec<DocumentRecord>,
    pub queries: Vec<QueryRecord>,
    pub qrels: QrelsTable,
    pub doc_store: EmbeddingStore,
    pub query_store: EmbeddingStore,
    pub oracle: OracleState,
}

enum DocRole {
    Relevant { query_idx: usize },
    Distractor,
    Background,
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const CONSONANTS: &[u8] = b"bcdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut word = String::with_capacity(6);
    for _ in 0..3 {
        word.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        word.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    word
}

fn unique_vocab(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut seen = HashSet::with_capacity(size);
    let mut vocab = Vec::with_capacity(size);
    while vocab.len() < size {
        let word = pseudo_word(rng);
        if seen.insert(word.clone()) {
            vocab.push(word);
        }
    }
    vocab
}

/// Generate a benchmark from `spec`. Deterministic: the same spec yields
/// byte-identical files from [`write_to_dir`].
pub fn generate(spec: &SynthSpec) -> Result<SynthBenchmark> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let vocab = unique_vocab(&mut rng, spec.vocab_size);
    let reserved = spec.n_queries * (TOPIC_TERMS_PER_QUERY + GAP_TERMS_PER_QUERY);
    let filler: Vec<&String> = vocab[reserved..].iter().collect();
    let pick_filler = |rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<String>| {
        for _ in 0..n {
            out.push(filler[rng.random_range(0..filler.len())].clone());
        }
    };

    let kept_topic_terms =
        ((1.0 - spec.gap_strength) * TOPIC_TERMS_PER_QUERY as f64).floor() as usize;

    let mut queries = Vec::with_capacity(spec.n_queries);
    let mut gap_terms_per_query = Vec::with_capacity(spec.n_queries);
    let mut planted: Vec<(DocRole, String)> = Vec::new();

    for query_idx in 0..spec.n_queries {
        let base = query_idx * (TOPIC_TERMS_PER_QUERY + GAP_TERMS_PER_QUERY);
        let topic: Vec<String> = vocab[base..base + TOPIC_TERMS_PER_QUERY].to_vec();
        let gap: Vec<String> = vocab
            [base + TOPIC_TERMS_PER_QUERY..base + TOPIC_TERMS_PER_QUERY + GAP_TERMS_PER_QUERY]
            .to_vec();

        // Topical terms appear SIGNAL_REPEAT times in the query text, a
        // crude stand-in for the redundancy of natural queries; the caption
        // mentions each gap term once.
        let mut query_tokens: Vec<String> = topic
            .iter()
            .flat_map(|t| std::iter::repeat_n(t.clone(), SIGNAL_REPEAT))
            .collect();
        query_tokens.shuffle(&mut rng);

        let domain = spec.domains[rng.random_range(0..spec.domains.len())].clone();
        queries.push(QueryRecord {
            query_id: format!("q{query_idx:05}"),
            text: query_tokens.join(" "),
            image_caption: gap.join(" "),
            image_ref: None,
            domain,
        });

        // Relevant document: all gap terms plus a gap-strength-controlled
        // share of topic terms, both at signal weight, filler padding.
        let mut tokens: Vec<String> = gap
            .iter()
            .flat_map(|t| std::iter::repeat_n(t.clone(), SIGNAL_REPEAT))
            .collect();
        let mut shuffled_topic = topic.clone();
        shuffled_topic.shuffle(&mut rng);
        for term in shuffled_topic.iter().take(kept_topic_terms) {
            tokens.extend(std::iter::repeat_n(term.clone(), SIGNAL_REPEAT));
        }
        let pad = DOC_WEIGHTED_TOKENS.saturating_sub(tokens.len());
        pick_filler(&mut rng, pad, &mut tokens);
        tokens.shuffle(&mut rng);
        planted.push((DocRole::Relevant { query_idx }, tokens.join(" ")));

        // Distractors: a subset of topic terms at signal weight, never gap
        // terms.
        for _ in 0..spec.distractors_per_query {
            let mut shuffled = topic.clone();
            shuffled.shuffle(&mut rng);
            let mut tokens: Vec<String> = shuffled
                .into_iter()
                .take(DISTRACTOR_TOPIC_TERMS)
                .flat_map(|t| std::iter::repeat_n(t, SIGNAL_REPEAT))
                .collect();
            let pad = DOC_WEIGHTED_TOKENS.saturating_sub(tokens.len());
            pick_filler(&mut rng, pad, &mut tokens);
            tokens.shuffle(&mut rng);
            planted.push((DocRole::Distractor, tokens.join(" ")));
        }

        gap_terms_per_query.push(gap);
    }

    for _ in planted.len()..spec.n_docs {
        let mut tokens = Vec::with_capacity(DOC_WEIGHTED_TOKENS);
        pick_filler(&mut rng, DOC_WEIGHTED_TOKENS, &mut tokens);
        planted.push((DocRole::Background, tokens.join(" ")));
    }

    // Shuffle so ids carry no signal about relevance.
    planted.shuffle(&mut rng);

    let embedder = HashEmbedder::new(spec.dim, spec.seed);
    let mut docs = Vec::with_capacity(spec.n_docs);
    let mut doc_store = EmbeddingStore::new(StoreKind::Document);
    let mut qrels = QrelsTable::default();
    for (i, (role, text)) in planted.into_iter().enumerate() {
        let doc_id = format!("d{i:06}");
        if let DocRole::Relevant { query_idx } = role {
            qrels.insert(queries[query_idx].query_id.clone(), doc_id.clone(), 1);
        }
        doc_store.insert(doc_id.clone(), embedder.embed(&text))?;
        docs.push(DocumentRecord { doc_id, text });
    }

    let mut query_store = EmbeddingStore::new(StoreKind::Query);
    let mut oracle = OracleState::default();
    for (query, gap) in queries.iter().zip(gap_terms_per_query) {
        query_store.insert(
            query_variant_key(&query.query_id, "original"),
            embedder.embed(&form_query_text(query)),
        )?;
        oracle.queries.insert(
            query.text.clone(),
            OracleQueryInfo {
                query_id: query.query_id.clone(),
                gap_terms: gap,
            },
        );
    }
    oracle.qrels = qrels.entries.clone();

    Ok(SynthBenchmark {
        spec: spec.clone(),
        docs,
        queries,
        qrels,
        doc_store,
        query_store,
        oracle,
    })
}

/// Summary statistics of a generated benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthStats {
    pub doc_count: usize,
    pub query_count: usize,
    pub dim: usize,
    pub per_domain: BTreeMap<String, usize>,
    pub mean_query_relevant_overlap: f64,
    pub mean_caption_relevant_overlap: f64,
    pub min_caption_relevant_overlap: usize,
}

fn token_set(text: &str) -> HashSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn describe(bench: &SynthBenchmark) -> SynthStats {
    let doc_by_id: BTreeMap<&str, &str> = bench
        .docs
        .iter()
        .map(|d| (d.doc_id.as_str(), d.text.as_str()))
        .collect();
    let mut per_domain = BTreeMap::new();
    let mut query_overlap_sum = 0usize;
    let mut caption_overlap_sum = 0usize;
    let mut caption_overlap_min = usize::MAX;

    for query in &bench.queries {
        *per_domain.entry(query.domain.clone()).or_insert(0) += 1;
        let Some(rels) = bench.qrels.for_query(&query.query_id) else {
            continue;
        };
        let query_tokens = token_set(&query.text);
        let caption_tokens = token_set(&query.image_caption);
        for doc_id in rels.keys() {
            let doc_tokens = token_set(doc_by_id.get(doc_id.as_str()).unwrap_or(&""));
            query_overlap_sum += query_tokens.intersection(&doc_tokens).count();
            let caption_overlap = caption_tokens.intersection(&doc_tokens).count();
            caption_overlap_sum += caption_overlap;
            caption_overlap_min = caption_overlap_min.min(caption_overlap);
        }
    }

    let n = bench.queries.len().max(1) as f64;
    SynthStats {
        doc_count: bench.docs.len(),
        query_count: bench.queries.len(),
        dim: bench.spec.dim,
        per_domain,
        mean_query_relevant_overlap: query_overlap_sum as f64 / n,
        mean_caption_relevant_overlap: caption_overlap_sum as f64 / n,
        min_caption_relevant_overlap: if caption_overlap_min == usize::MAX {
            0
        } else {
            caption_overlap_min
        },
    }
}

impl fmt::Display for SynthStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} docs, {} queries, dim {}",
            self.doc_count, self.query_count, self.dim
        )?;
        for (domain, count) in &self.per_domain {
            writeln!(f, "  domain {domain}: {count} queries")?;
        }
        writeln!(
            f,
            "  mean q_t/relevant token overlap: {:.2}",
            self.mean_query_relevant_overlap
        )?;
        write!(
            f,
            "  caption/relevant token overlap: mean {:.2}, min {}",
            self.mean_caption_relevant_overlap, self.min_caption_relevant_overlap
        )
    }
}

/// File layout of a benchmark directory, recorded in `benchmark.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    pub name: String,
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
    pub doc_embeddings: PathBuf,
    pub query_embeddings: PathBuf,
    pub oracle_state: PathBuf,
    pub embedder: EmbedderManifest,
}

/// The embedder the benchmark was built with; runs must match it for
/// secondary-retrieval geometry to line up with the stored vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderManifest {
    pub kind: String,
    pub dim: usize,
    pub seed: u64,
}

/// Write the benchmark in the exact ingestion formats plus the oracle state
/// and a manifest naming all files.
pub fn write_to_dir(bench: &SynthBenchmark, dir: &Path) -> Result<BenchmarkManifest> {
    std::fs::create_dir_all(dir)
        .map_err(|e| HiveError::io(format!("creating {}", dir.display()), e))?;

    let corpus_path = dir.join("corpus.jsonl");
    let mut corpus_out = String::new();
    for doc in &bench.docs {
        corpus_out.push_str(&serde_json::to_string(doc).map_err(|e| HiveError::Json {
            context: "serializing corpus".to_string(),
            source: e,
        })?);
        corpus_out.push('\n');
    }
    std::fs::write(&corpus_path, corpus_out)
        .map_err(|e| HiveError::io(format!("writing {}", corpus_path.display()), e))?;

    let queries_path = dir.join("queries.jsonl");
    let mut queries_out = String::new();
    for query in &bench.queries {
        queries_out.push_str(&serde_json::to_string(query).map_err(|e| HiveError::Json {
            context: "serializing queries".to_string(),
            source: e,
        })?);
        queries_out.push('\n');
    }
    std::fs::write(&queries_path, queries_out)
        .map_err(|e| HiveError::io(format!("writing {}", queries_path.display()), e))?;

    let qrels_path = dir.join("qrels.tsv");
    let mut qrels_out = String::new();
    for (query_id, docs) in &bench.qrels.entries {
        for (doc_id, grade) in docs {
            qrels_out.push_str(&format!("{query_id}\t{doc_id}\t{grade}\n"));
        }
    }
    std::fs::write(&qrels_path, qrels_out)
        .map_err(|e| HiveError::io(format!("writing {}", qrels_path.display()), e))?;

    let doc_emb_path = dir.join("doc_embeddings.bin");
    crate::ingest::save_embeddings_binary(&bench.doc_store, &doc_emb_path)?;
    let query_emb_path = dir.join("query_embeddings.bin");
    crate::ingest::save_embeddings_binary(&bench.query_store, &query_emb_path)?;

    let oracle_path = dir.join("oracle_state.json");
    bench.oracle.save(&oracle_path)?;

    let manifest = BenchmarkManifest {
        name: format!(
            "synth-seed{}-g{:03}",
            bench.spec.seed,
            (bench.spec.gap_strength * 100.0).round() as u32
        ),
        corpus: PathBuf::from("corpus.jsonl"),
        queries: PathBuf::from("queries.jsonl"),
        qrels: PathBuf::from("qrels.tsv"),
        doc_embeddings: PathBuf::from("doc_embeddings.bin"),
        query_embeddings: PathBuf::from("query_embeddings.bin"),
        oracle_state: PathBuf::from("oracle_state.json"),
        embedder: EmbedderManifest {
            kind: "hash".to_string(),
            dim: bench.spec.dim,
            seed: bench.spec.seed,
        },
    };
    let manifest_path = dir.join("benchmark.toml");
    let body = toml::to_string_pretty(&manifest)
        .map_err(|e| HiveError::InvalidConfig(format!("serializing benchmark manifest: {e}")))?;
    std::fs::write(&manifest_path, body)
        .map_err(|e| HiveError::io(format!("writing {}", manifest_path.display()), e))?;
    Ok(manifest)
}
