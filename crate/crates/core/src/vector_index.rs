//! Exact dense retrieval over precomputed embeddings.
//!
//! The index is the base retriever of the pipeline: it stores one vector per
//! document and answers top-k queries by brute-force cosine similarity. No
//! approximate structure is used; at the corpus sizes this engine targets
//! (up to ~100k documents) exact scoring is cheap and keeps oracle tests
//! meaningful.
//!
//! Ranking is fully deterministic: documents are ordered by cosine score
//! descending with ties broken by ascending doc id.

use crate::error::{HiveError, Result};
use crate::ingest::{DocumentRecord, EmbeddingStore};
use serde::{Deserialize, Serialize};

/// A dense vector with finite components. The dimension is the length of
/// `values`; stores enforce a uniform dimension across all vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Euclidean magnitude, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| {
                let v = f64::from(v);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One retrieval result: a document id with its cosine score and 1-based rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Cosine similarity between two vectors, computed in f64.
///
/// Errors on dimension mismatch (configuration error) and on zero-magnitude
/// input (degenerate input; a zero vector signals corrupt data upstream).
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(HiveError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
            context: "cosine".to_string(),
        });
    }
    let mut dot = 0.0f64;
    for i in 0..a.values.len() {
        dot += f64::from(a.values[i]) * f64::from(b.values[i]);
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(HiveError::DegenerateVector {
            id: "(anonymous)".to_string(),
        });
    }
    Ok(dot / (na * nb))
}

/// Immutable exact-retrieval index: document ids in corpus order, their
/// vectors, and precomputed norms. Safe for unlimited concurrent readers.
#[derive(Debug)]
pub struct Index {
    doc_ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    norms: Vec<f64>,
    dim: usize,
}

impl Index {
    /// Build an index covering exactly `docs`, pulling vectors from `store`.
    ///
    /// Every document must have exactly one embedding; zero-magnitude or
    /// non-finite vectors are rejected at build time rather than scored.
    pub fn build(docs: &[DocumentRecord], store: &EmbeddingStore) -> Result<Self> {
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut vectors = Vec::with_capacity(docs.len());
        let mut norms = Vec::with_capacity(docs.len());
        let mut seen = std::collections::HashSet::with_capacity(docs.len());

        for doc in docs {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(HiveError::DuplicateId {
                    id: doc.doc_id.clone(),
                    what: "index build".to_string(),
                });
            }
            let vector = store
                .get(&doc.doc_id)
                .ok_or_else(|| HiveError::MissingEmbedding {
                    id: doc.doc_id.clone(),
                })?;
            if !vector.is_finite() {
                return Err(HiveError::NonFiniteVector {
                    id: doc.doc_id.clone(),
                });
            }
            let norm = vector.norm();
            if norm == 0.0 {
                return Err(HiveError::DegenerateVector {
                    id: doc.doc_id.clone(),
                });
            }
            doc_ids.push(doc.doc_id.clone());
            vectors.push(vector.clone());
            norms.push(norm);
        }

        let dim = if vectors.is_empty() {
            store.dim()
        } else {
            vectors[0].dim()
        };

        Ok(Self {
            doc_ids,
            vectors,
            norms,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Top-k documents by cosine similarity to `query_vec`.
    ///
    /// Equivalent to scoring the whole corpus, sorting by score descending
    /// with ascending doc-id tie-break, and truncating to k. Returns
    /// min(k, corpus size) hits with ranks 1..=len.
    pub fn top_k(&self, query_vec: &EmbeddingVector, k: usize) -> Result<Vec<ScoredHit>> {
        if self.is_empty() || k == 0 {
            if !self.is_empty() && query_vec.dim() != self.dim {
                return Err(HiveError::DimensionMismatch {
                    expected: self.dim,
                    got: query_vec.dim(),
                    context: "top_k query".to_string(),
                });
            }
            return Ok(Vec::new());
        }
        if query_vec.dim() != self.dim {
            return Err(HiveError::DimensionMismatch {
                expected: self.dim,
                got: query_vec.dim(),
                context: "top_k query".to_string(),
            });
        }
        let qnorm = query_vec.norm();
        if qnorm == 0.0 {
            return Err(HiveError::DegenerateVector {
                id: "(query)".to_string(),
            });
        }

        let mut scored: Vec<(usize, f64)> = Vec::with_capacity(self.len());
        for (i, vector) in self.vectors.iter().enumerate() {
            let mut dot = 0.0f64;
            for (qv, dv) in query_vec.values.iter().zip(vector.values.iter()) {
                dot += f64::from(*qv) * f64::from(*dv);
            }
            scored.push((i, dot / (qnorm * self.norms[i])));
        }
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        scored.truncate(k);

        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(pos, (i, score))| ScoredHit {
                doc_id: self.doc_ids[i].clone(),
                score,
                rank: pos + 1,
            })
            .collect())
    }
}
