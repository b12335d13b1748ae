//! Per-query audit trail and run manifest, plus their stable on-disk
//! formats (JSONL traces, JSON manifest).
//!
//! Trace and manifest files are part of the determinism contract: two runs
//! over identical inputs with the mock provider produce byte-identical
//! files. Wall-clock timings therefore live in a separate sidecar
//! (`timings.json`) that is explicitly outside that contract.

use crate::error::{HiveError, Result};
use crate::vector_index::ScoredHit;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Retrieval state accumulated across the stages of one query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub d1: Vec<ScoredHit>,
    pub compensatory_query: Option<String>,
    pub d2: Vec<ScoredHit>,
    pub union_ids: Vec<String>,
}

/// A recoverable deviation from the happy path (parse failure, skipped
/// stage, degenerate input), recorded rather than raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub stage: String,
    pub kind: String,
    pub detail: String,
}

/// Complete audit trail for one query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub query_id: String,
    pub domain: String,
    pub pool: CandidatePool,
    pub hypothesis_prompt_digest: Option<String>,
    pub verify_prompt_digest: Option<String>,
    /// Ids the verify stage placed in its top list, in its order.
    pub verify_ranked: Option<Vec<String>>,
    pub llm_failures: Vec<FallbackEvent>,
    /// Final scored ranking over the whole pool, score descending.
    #[serde(rename = "final")]
    pub final_ranking: Vec<(String, i64)>,
    pub degenerate: bool,
    pub error: Option<String>,
}

/// Wall-clock stage durations for one query; aggregated into the sidecar,
/// never serialized into traces.
#[derive(Debug, Clone, Copy, Default)]
pub struct QueryTimings {
    pub stage1_ms: u64,
    pub stage2_ms: u64,
    pub stage3_ms: u64,
    pub stage4_ms: u64,
}

/// Aggregate timings for a run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RunTimings {
    pub queries: usize,
    pub stage1_ms: u64,
    pub stage2_ms: u64,
    pub stage3_ms: u64,
    pub stage4_ms: u64,
    pub wall_ms: u64,
}

impl RunTimings {
    pub fn absorb(&mut self, t: QueryTimings) {
        self.queries += 1;
        self.stage1_ms += t.stage1_ms;
        self.stage2_ms += t.stage2_ms;
        self.stage3_ms += t.stage3_ms;
        self.stage4_ms += t.stage4_ms;
    }
}

/// Versions of the prompt templates a run used.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateVersions {
    pub hypothesis: String,
    pub verify: String,
}

/// SHA-256 digests of the input files, for reproducibility bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDigests {
    pub corpus: Option<String>,
    pub queries: Option<String>,
    pub qrels: Option<String>,
    pub doc_embeddings: Option<String>,
    pub query_embeddings: Option<String>,
}

/// Binds together everything that determines a run's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_name: String,
    pub engine_version: String,
    pub seed: u64,
    pub provider: String,
    pub pipeline: crate::pipeline::PipelineConfig,
    pub template_versions: TemplateVersions,
    pub data_digests: DataDigests,
    pub query_count: usize,
    pub failed_queries: Vec<(String, String)>,
}

pub fn write_traces_jsonl(path: &Path, traces: &[StageTrace]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| HiveError::io(format!("creating {}", path.display()), e))?;
    let mut writer = BufWriter::new(file);
    for trace in traces {
        let line = serde_json::to_string(trace).map_err(|e| HiveError::Json {
            context: format!("serializing trace for {}", trace.query_id),
            source: e,
        })?;
        writeln!(writer, "{line}")
            .map_err(|e| HiveError::io(format!("writing {}", path.display()), e))?;
    }
    writer
        .flush()
        .map_err(|e| HiveError::io(format!("writing {}", path.display()), e))
}

pub fn read_traces_jsonl(path: &Path) -> Result<Vec<StageTrace>> {
    let file = std::fs::File::open(path)
        .map_err(|e| HiveError::io(format!("opening {}", path.display()), e))?;
    let mut traces = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: StageTrace = serde_json::from_str(&line).map_err(|e| HiveError::ParseLine {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("bad trace record: {e}"),
        })?;
        traces.push(trace);
    }
    Ok(traces)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let body = serde_json::to_vec_pretty(manifest).map_err(|e| HiveError::Json {
        context: "serializing run manifest".to_string(),
        source: e,
    })?;
    std::fs::write(path, body).map_err(|e| HiveError::io(format!("writing {}", path.display()), e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let bytes =
        std::fs::read(path).map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_slice(&bytes).map_err(|e| HiveError::Json {
        context: format!("parsing manifest {}", path.display()),
        source: e,
    })
}

pub fn write_timings(path: &Path, timings: &RunTimings) -> Result<()> {
    let body = serde_json::to_vec_pretty(timings).map_err(|e| HiveError::Json {
        context: "serializing timings".to_string(),
        source: e,
    })?;
    std::fs::write(path, body).map_err(|e| HiveError::io(format!("writing {}", path.display()), e))
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)
        .map_err(|e| HiveError::io(format!("digesting {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
