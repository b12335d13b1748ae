//! Report emission: CSV for machines, Markdown for humans.
//!
//! CSV carries full precision; Markdown shows scores scaled to 0-100 and
//! rounded to one decimal, the usual presentation for nDCG tables. Rounding
//! happens only here, at emission time.

use crate::error::{HiveError, Result};
use crate::eval::{AggregateReport, DeltaReport, EvalResult};
use std::fmt::Write as _;
use std::path::Path;

fn write_file(path: &Path, body: String) -> Result<()> {
    std::fs::write(path, body).map_err(|e| HiveError::io(format!("writing {}", path.display()), e))
}

fn pct(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

pub fn write_per_query_csv(path: &Path, results: &[EvalResult]) -> Result<()> {
    let mut out = String::from("query_id,domain,ndcg,recall,k\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{}",
            csv_field(&r.query_id),
            csv_field(&r.domain),
            r.ndcg_at_k,
            r.recall_at_k,
            r.k
        );
    }
    write_file(path, out)
}

pub fn write_domain_csv(path: &Path, report: &AggregateReport) -> Result<()> {
    let mut out = String::from("domain,queries,mean_ndcg,mean_recall\n");
    for d in report
        .domains
        .iter()
        .chain(std::iter::once(&report.overall))
    {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6}",
            csv_field(&d.domain),
            d.query_count,
            d.mean_ndcg,
            d.mean_recall
        );
    }
    write_file(path, out)
}

pub fn write_domain_markdown(path: &Path, report: &AggregateReport, title: &str) -> Result<()> {
    let k = report.k;
    let mut out = format!("# {title}\n\n");
    let _ = writeln!(out, "| Domain | Queries | nDCG@{k} | Recall@{k} |");
    out.push_str("|---|---:|---:|---:|\n");
    for d in &report.domains {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            d.domain,
            d.query_count,
            pct(d.mean_ndcg),
            pct(d.mean_recall)
        );
    }
    let o = &report.overall;
    let _ = writeln!(
        out,
        "| **{}** | **{}** | **{}** | **{}** |",
        o.domain,
        o.query_count,
        pct(o.mean_ndcg),
        pct(o.mean_recall)
    );
    write_file(path, out)
}

pub fn write_delta_csv(path: &Path, delta: &DeltaReport) -> Result<()> {
    let mut out = String::from("domain,queries,ndcg_a,ndcg_b,delta\n");
    for row in delta.domains.iter().chain(std::iter::once(&delta.overall)) {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:+.6}",
            row.domain, row.query_count, row.ndcg_a, row.ndcg_b, row.delta_ndcg
        );
    }
    write_file(path, out)
}

pub fn write_delta_markdown(path: &Path, delta: &DeltaReport, title: &str) -> Result<()> {
    let mut out = format!("# {title}\n\nDelta is run B minus run A.\n\n");
    out.push_str("| Domain | Queries | nDCG A | nDCG B | Δ |\n|---|---:|---:|---:|---:|\n");
    for row in delta.domains.iter().chain(std::iter::once(&delta.overall)) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:+.1} |",
            row.domain,
            row.query_count,
            pct(row.ndcg_a),
            pct(row.ndcg_b),
            row.delta_ndcg * 100.0
        );
    }
    write_file(path, out)
}

/// One row of a multi-configuration comparison (ablations, sweeps).
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub label: String,
    pub ndcg: f64,
    pub recall: f64,
    pub query_count: usize,
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow], k: usize) -> Result<()> {
    let mut out = format!("configuration,queries,ndcg_at_{k},recall_at_{k}\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6}",
            csv_field(&row.label),
            row.query_count,
            row.ndcg,
            row.recall
        );
    }
    write_file(path, out)
}

pub fn write_comparison_markdown(
    path: &Path,
    rows: &[ComparisonRow],
    k: usize,
    title: &str,
) -> Result<()> {
    let mut out = format!("# {title}\n\n");
    let _ = writeln!(out, "| Configuration | Queries | nDCG@{k} | Recall@{k} |");
    out.push_str("|---|---:|---:|---:|\n");
    for row in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.label,
            row.query_count,
            pct(row.ndcg),
            pct(row.recall)
        );
    }
    write_file(path, out)
}
