//! nDCG@k and recall@k with per-domain and overall aggregation.
//!
//! The overall figure is the mean over all evaluable queries, which equals
//! the domain means weighted by query count (query-weighted macro average).
//! Queries with no positive judgment are excluded rather than scored zero:
//! scoring them zero would punish the retriever for dataset gaps.

use crate::error::{HiveError, Result};
use crate::ingest::QrelsTable;
use crate::trace::StageTrace;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Gain applied to a relevance grade inside DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainFunction {
    /// 2^grade - 1 (trec_eval convention; the default).
    Exponential,
    /// The grade itself. Coincides with exponential on binary judgments.
    Linear,
}

impl GainFunction {
    fn gain(self, grade: u32) -> f64 {
        match self {
            GainFunction::Exponential => (2f64).powi(grade as i32) - 1.0,
            GainFunction::Linear => f64::from(grade),
        }
    }
}

/// Metrics for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub query_id: String,
    pub domain: String,
    pub ndcg_at_k: f64,
    pub recall_at_k: f64,
    pub k: usize,
}

/// Mean metrics over the evaluable queries of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainAggregate {
    pub domain: String,
    pub query_count: usize,
    pub mean_ndcg: f64,
    pub mean_recall: f64,
}

/// Per-domain aggregates plus the overall query-weighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub k: usize,
    pub domains: Vec<DomainAggregate>,
    pub overall: DomainAggregate,
}

/// nDCG@k of a ranking (score descending) against one query's judgments.
/// Returns `None` when the query has no positive grade (non-evaluable).
pub fn ndcg_at_k(
    ranking: &[(String, i64)],
    qrels: &BTreeMap<String, u32>,
    k: usize,
    gain: GainFunction,
) -> Option<f64> {
    let mut ideal: Vec<u32> = qrels.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));

    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, (doc_id, _))| {
            let grade = qrels.get(doc_id).copied().unwrap_or(0);
            gain.gain(grade) / ((i as f64) + 2.0).log2()
        })
        .sum();
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &grade)| gain.gain(grade) / ((i as f64) + 2.0).log2())
        .sum();
    Some(dcg / idcg)
}

/// Fraction of the query's relevant documents present in the top k.
/// Returns `None` for non-evaluable queries.
pub fn recall_at_k(
    ranking: &[(String, i64)],
    qrels: &BTreeMap<String, u32>,
    k: usize,
) -> Option<f64> {
    let relevant: BTreeSet<&str> = qrels
        .iter()
        .filter(|(_, &g)| g > 0)
        .map(|(id, _)| id.as_str())
        .collect();
    if relevant.is_empty() {
        return None;
    }
    let hit = ranking
        .iter()
        .take(k)
        .filter(|(doc_id, _)| relevant.contains(doc_id.as_str()))
        .count();
    Some(hit as f64 / relevant.len() as f64)
}

/// Evaluate a run's traces. Failed queries (trace errors) and non-evaluable
/// queries are skipped with a warning; degenerate queries score over their
/// empty ranking.
pub fn evaluate_traces(
    traces: &[StageTrace],
    qrels: &QrelsTable,
    k: usize,
    gain: GainFunction,
) -> Vec<EvalResult> {
    let mut results = Vec::with_capacity(traces.len());
    for trace in traces {
        if let Some(error) = &trace.error {
            log::warn!("skipping failed query {}: {error}", trace.query_id);
            continue;
        }
        let Some(judgments) = qrels.for_query(&trace.query_id) else {
            log::warn!("query {} has no judgments; skipping", trace.query_id);
            continue;
        };
        let (Some(ndcg), Some(recall)) = (
            ndcg_at_k(&trace.final_ranking, judgments, k, gain),
            recall_at_k(&trace.final_ranking, judgments, k),
        ) else {
            log::warn!(
                "query {} has no positive judgment; skipping",
                trace.query_id
            );
            continue;
        };
        results.push(EvalResult {
            query_id: trace.query_id.clone(),
            domain: trace.domain.clone(),
            ndcg_at_k: ndcg,
            recall_at_k: recall,
            k,
        });
    }
    results
}

/// Per-domain means plus the overall mean over all evaluable queries.
pub fn aggregate(results: &[EvalResult]) -> AggregateReport {
    let k = results.first().map(|r| r.k).unwrap_or(0);
    let mut by_domain: BTreeMap<&str, Vec<&EvalResult>> = BTreeMap::new();
    for result in results {
        debug_assert_eq!(result.k, k, "mixed k within one aggregation");
        by_domain.entry(&result.domain).or_default().push(result);
    }
    let domains: Vec<DomainAggregate> = by_domain
        .into_iter()
        .map(|(domain, rs)| DomainAggregate {
            domain: domain.to_string(),
            query_count: rs.len(),
            mean_ndcg: mean(rs.iter().map(|r| r.ndcg_at_k)),
            mean_recall: mean(rs.iter().map(|r| r.recall_at_k)),
        })
        .collect();
    let overall = DomainAggregate {
        domain: "overall".to_string(),
        query_count: results.len(),
        mean_ndcg: mean(results.iter().map(|r| r.ndcg_at_k)),
        mean_recall: mean(results.iter().map(|r| r.recall_at_k)),
    };
    AggregateReport {
        k,
        domains,
        overall,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// One row of a run-vs-run comparison; deltas are B minus A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub domain: String,
    pub query_count: usize,
    pub ndcg_a: f64,
    pub ndcg_b: f64,
    pub delta_ndcg: f64,
}

/// Per-domain and overall deltas between two runs on the same query set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub domains: Vec<DeltaRow>,
    pub overall: DeltaRow,
}

/// Compare two runs. Errors when the evaluated query sets differ, listing
/// the symmetric difference.
pub fn compare_runs(a: &[EvalResult], b: &[EvalResult]) -> Result<DeltaReport> {
    let ids_a: BTreeSet<&str> = a.iter().map(|r| r.query_id.as_str()).collect();
    let ids_b: BTreeSet<&str> = b.iter().map(|r| r.query_id.as_str()).collect();
    if ids_a != ids_b {
        return Err(HiveError::QuerySetMismatch {
            only_a: ids_a.difference(&ids_b).map(|s| s.to_string()).collect(),
            only_b: ids_b.difference(&ids_a).map(|s| s.to_string()).collect(),
        });
    }

    let agg_a = aggregate(a);
    let agg_b = aggregate(b);
    let by_domain_b: BTreeMap<&str, &DomainAggregate> = agg_b
        .domains
        .iter()
        .map(|d| (d.domain.as_str(), d))
        .collect();

    let domains = agg_a
        .domains
        .iter()
        .map(|da| {
            let db = by_domain_b
                .get(da.domain.as_str())
                .expect("identical query sets imply identical domains");
            DeltaRow {
                domain: da.domain.clone(),
                query_count: da.query_count,
                ndcg_a: da.mean_ndcg,
                ndcg_b: db.mean_ndcg,
                delta_ndcg: db.mean_ndcg - da.mean_ndcg,
            }
        })
        .collect();
    let overall = DeltaRow {
        domain: "overall".to_string(),
        query_count: agg_a.overall.query_count,
        ndcg_a: agg_a.overall.mean_ndcg,
        ndcg_b: agg_b.overall.mean_ndcg,
        delta_ndcg: agg_b.overall.mean_ndcg - agg_a.overall.mean_ndcg,
    };
    Ok(DeltaReport { domains, overall })
}
