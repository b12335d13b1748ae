//! Run assembly and orchestration: resolved run specifications, engine
//! construction, run execution with stable on-disk products, and the
//! multi-configuration drivers for ablations and hyperparameter sweeps.
//!
//! A run directory always contains `traces.jsonl`, `manifest.json`,
//! `resolved_config.toml` (the frozen configuration), and `timings.json`
//! (wall-clock diagnostics, the one file excluded from the determinism
//! contract).

use crate::embed::{EmbeddingEndpoint, HashEmbedder, QueryEmbedder};
use crate::error::{HiveError, Result};
use crate::eval::{aggregate, evaluate_traces, AggregateReport, EvalResult, GainFunction};
use crate::ingest::{
    load_corpus, load_embeddings, load_qrels, load_queries, QrelsTable, StoreKind,
};
use crate::pipeline::{Engine, PipelineConfig, PoolPolicy, StageSet};
use crate::prompts::{PromptBudget, PromptKind, PromptSet, PromptTemplate};
use crate::provider::http::{HttpProviderConfig, RetryPolicy};
use crate::provider::{ChatProvider, MockOracle, OpenAiCompatProvider, OracleState, ResponseCache};
use crate::report::ComparisonRow;
use crate::synthbench::BenchmarkManifest;
use crate::trace::{
    file_digest, write_manifest, write_timings, write_traces_jsonl, DataDigests, RunManifest,
    StageTrace, TemplateVersions,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Input file locations for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    pub doc_embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embeddings: Option<PathBuf>,
}

/// Which LLM backend a run talks to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    Mock {
        oracle_state: PathBuf,
        #[serde(default)]
        noise: f64,
    },
    Openai {
        base_url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default = "default_retry_base_ms")]
        retry_base_ms: u64,
        #[serde(default = "default_inflight")]
        max_inflight: usize,
    },
}

fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    500
}
fn default_inflight() -> usize {
    4
}

/// How compensatory-query embeddings are produced when absent from the
/// precomputed store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderSpec {
    /// Precomputed store only; a missing variant fails the query.
    None,
    /// Built-in token-hash projection; must match the corpus embeddings.
    Hash { dim: usize, seed: u64 },
    /// External OpenAI-compatible /embeddings endpoint.
    Endpoint {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default = "default_retry_base_ms")]
        retry_base_ms: u64,
    },
}

/// Optional custom prompt template files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<PathBuf>,
}

/// A fully resolved run: everything that determines its results. This is
/// what gets frozen into `resolved_config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub data: DataPaths,
    pub provider: ProviderSpec,
    pub embedder: EmbedderSpec,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub templates: TemplatePaths,
}

/// Execution parameters that do not affect results: where to write, and how
/// much parallelism to use.
#[derive(Debug, Clone)]
pub struct ExecParams {
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub cache_dir: Option<PathBuf>,
}

/// The named ablation configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunProfile {
    /// First-pass retrieval only, depth max(k1, k_f) so evaluation at k_f
    /// is meaningful.
    Base,
    /// Synthesize, then retrieve top-k_f with the compensatory query alone;
    /// no union, no verification.
    S2Only,
    /// Verify/rerank the probe set alone.
    S4Only,
    /// Expand and union without verification.
    S23,
    /// All four stages.
    Full,
}

impl RunProfile {
    pub const CANONICAL: [RunProfile; 5] = [
        RunProfile::Base,
        RunProfile::S2Only,
        RunProfile::S4Only,
        RunProfile::S23,
        RunProfile::Full,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RunProfile::Base => "base",
            RunProfile::S2Only => "s2_only",
            RunProfile::S4Only => "s4_only",
            RunProfile::S23 => "s23",
            RunProfile::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<RunProfile> {
        match s {
            "base" => Some(RunProfile::Base),
            "s2_only" => Some(RunProfile::S2Only),
            "s4_only" => Some(RunProfile::S4Only),
            "s23" => Some(RunProfile::S23),
            "full" => Some(RunProfile::Full),
            _ => None,
        }
    }

    /// Derive the profile's pipeline configuration from a base config.
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut config = base.clone();
        config.pool_policy = PoolPolicy::Union;
        match self {
            RunProfile::Base => {
                config.stages = StageSet::NONE;
                config.k1 = base.k1.max(base.k_f);
            }
            RunProfile::S2Only => {
                config.stages = StageSet {
                    synthesis: true,
                    secondary: true,
                    verify: false,
                };
                config.k2 = base.k_f;
                config.pool_policy = PoolPolicy::SecondaryOnly;
            }
            RunProfile::S4Only => {
                config.stages = StageSet {
                    synthesis: false,
                    secondary: false,
                    verify: true,
                };
            }
            RunProfile::S23 => {
                config.stages = StageSet {
                    synthesis: true,
                    secondary: true,
                    verify: false,
                };
            }
            RunProfile::Full => {
                config.stages = StageSet::ALL;
            }
        }
        config
    }
}

/// Parse a `--stages` value: a profile name or a comma-separated subset of
/// {synthesis, secondary, verify} ("none" for stage 1 alone).
pub fn parse_stage_selection(s: &str) -> Result<(Option<RunProfile>, StageSet)> {
    if let Some(profile) = RunProfile::parse(s) {
        return Ok((Some(profile), StageSet::NONE));
    }
    if s == "none" {
        return Ok((None, StageSet::NONE));
    }
    let mut set = StageSet::NONE;
    for part in s.split(',') {
        match part.trim() {
            "synthesis" => set.synthesis = true,
            "secondary" => set.secondary = true,
            "verify" => set.verify = true,
            other => {
                return Err(HiveError::InvalidConfig(format!(
                    "unknown stage '{other}' (expected a profile name, 'none', or a subset of synthesis,secondary,verify)"
                )))
            }
        }
    }
    Ok((None, set))
}

/// Load a benchmark manifest and resolve its relative paths.
pub fn load_benchmark(path: &Path) -> Result<(BenchmarkManifest, DataPaths)> {
    let manifest_path = if path.is_dir() {
        path.join("benchmark.toml")
    } else {
        path.to_path_buf()
    };
    let body = std::fs::read_to_string(&manifest_path)
        .map_err(|e| HiveError::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: BenchmarkManifest = toml::from_str(&body)
        .map_err(|e| HiveError::InvalidConfig(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let resolve = |p: &PathBuf| {
        if p.is_absolute() {
            p.clone()
        } else {
            base.join(p)
        }
    };
    let data = DataPaths {
        corpus: resolve(&manifest.corpus),
        queries: resolve(&manifest.queries),
        qrels: Some(resolve(&manifest.qrels)),
        doc_embeddings: resolve(&manifest.doc_embeddings),
        query_embeddings: Some(resolve(&manifest.query_embeddings)),
    };
    Ok((manifest, data))
}

/// Resolve the oracle-state path of a benchmark manifest.
pub fn benchmark_oracle_path(manifest: &BenchmarkManifest, manifest_dir: &Path) -> PathBuf {
    if manifest.oracle_state.is_absolute() {
        manifest.oracle_state.clone()
    } else {
        manifest_dir.join(&manifest.oracle_state)
    }
}

fn build_provider(spec: &ProviderSpec, seed: u64) -> Result<Box<dyn ChatProvider>> {
    match spec {
        ProviderSpec::Mock {
            oracle_state,
            noise,
        } => {
            let state = OracleState::load(oracle_state)?;
            Ok(Box::new(MockOracle::new(state).with_noise(*noise, seed)))
        }
        ProviderSpec::Openai {
            base_url,
            api_key_env,
            timeout_secs,
            max_retries,
            retry_base_ms,
            max_inflight,
        } => {
            let provider = OpenAiCompatProvider::new(HttpProviderConfig {
                base_url: base_url.clone(),
                api_key_env: api_key_env.clone(),
                timeout: Duration::from_secs(*timeout_secs),
                retry: RetryPolicy {
                    max_retries: *max_retries,
                    base_delay: Duration::from_millis(*retry_base_ms),
                },
                max_inflight: *max_inflight,
            })?;
            Ok(Box::new(provider))
        }
    }
}

fn build_prompts(templates: &TemplatePaths, config: &PipelineConfig) -> Result<PromptSet> {
    let hypothesis = match &templates.hypothesis {
        Some(path) => PromptTemplate::from_file(PromptKind::Hypothesis, path)?,
        None => PromptTemplate::builtin(PromptKind::Hypothesis),
    };
    let verify = match &templates.verify {
        Some(path) => PromptTemplate::from_file(PromptKind::Verify, path)?,
        None => PromptTemplate::builtin(PromptKind::Verify),
    };
    Ok(PromptSet {
        hypothesis,
        verify,
        budget: PromptBudget {
            per_doc_chars: config.per_doc_chars,
            total_chars: config.prompt_chars,
        },
    })
}

/// Build a ready-to-run engine from a resolved spec.
pub fn build_engine(spec: &RunSpec, cache_dir: Option<&Path>) -> Result<Engine> {
    spec.pipeline.validate()?;
    let docs = load_corpus(&spec.data.corpus)?;
    let doc_store = load_embeddings(&spec.data.doc_embeddings, StoreKind::Document)?;
    let index = crate::vector_index::Index::build(&docs, &doc_store)?;

    let query_store = match &spec.data.query_embeddings {
        Some(path) => Some(load_embeddings(path, StoreKind::Query)?),
        None => None,
    };
    let (endpoint, hash) = match &spec.embedder {
        EmbedderSpec::None => (None, None),
        EmbedderSpec::Hash { dim, seed } => {
            // An empty corpus leaves the index dimensionless; any embedder
            // dimension is then acceptable (retrieval is vacuous anyway).
            if !index.is_empty() && *dim != index.dim() {
                return Err(HiveError::DimensionMismatch {
                    expected: index.dim(),
                    got: *dim,
                    context: "hash embedder vs corpus embeddings".to_string(),
                });
            }
            (None, Some(HashEmbedder::new(*dim, *seed)))
        }
        EmbedderSpec::Endpoint {
            base_url,
            model,
            api_key_env,
            timeout_secs,
            max_retries,
            retry_base_ms,
        } => {
            let endpoint = EmbeddingEndpoint::new(
                base_url.clone(),
                model.clone(),
                api_key_env.as_deref(),
                Duration::from_secs(*timeout_secs),
                RetryPolicy {
                    max_retries: *max_retries,
                    base_delay: Duration::from_millis(*retry_base_ms),
                },
            )?;
            (Some(endpoint), None)
        }
    };

    let expected_dim = if index.is_empty() {
        hash.map(|h| h.dim)
            .or_else(|| query_store.as_ref().map(|s| s.dim()))
            .unwrap_or(0)
    } else {
        index.dim()
    };
    let embedder = QueryEmbedder {
        endpoint,
        store: query_store,
        hash,
        expected_dim,
    };
    let provider = build_provider(&spec.provider, spec.pipeline.seed)?;
    let cache = match cache_dir {
        Some(dir) => Some(ResponseCache::open(dir)?),
        None => None,
    };
    let prompts = build_prompts(&spec.templates, &spec.pipeline)?;
    let doc_texts = docs
        .into_iter()
        .map(|d| (d.doc_id, d.text))
        .collect::<std::collections::HashMap<_, _>>();

    Ok(Engine {
        index,
        doc_texts,
        provider,
        cache,
        embedder,
        prompts,
        config: spec.pipeline.clone(),
    })
}

/// What a completed run leaves behind.
#[derive(Debug)]
pub struct RunProducts {
    pub out_dir: PathBuf,
    pub traces: Vec<StageTrace>,
    pub manifest: RunManifest,
}

fn digest_of(path: &Path) -> Option<String> {
    file_digest(path).ok()
}

/// Execute a run end to end and write its products into `exec.out_dir`.
pub fn execute_run(spec: &RunSpec, exec: &ExecParams) -> Result<RunProducts> {
    let engine = build_engine(spec, exec.cache_dir.as_deref())?;
    let queries = load_queries(&spec.data.queries)?;
    let batch = engine.run_batch(&queries, exec.jobs)?;

    std::fs::create_dir_all(&exec.out_dir)
        .map_err(|e| HiveError::io(format!("creating {}", exec.out_dir.display()), e))?;

    let manifest = RunManifest {
        config_name: spec.name.clone(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: spec.pipeline.seed,
        provider: engine.provider.id().to_string(),
        pipeline: spec.pipeline.clone(),
        template_versions: TemplateVersions {
            hypothesis: engine.prompts.hypothesis.version.clone(),
            verify: engine.prompts.verify.version.clone(),
        },
        data_digests: DataDigests {
            corpus: digest_of(&spec.data.corpus),
            queries: digest_of(&spec.data.queries),
            qrels: spec.data.qrels.as_deref().and_then(digest_of),
            doc_embeddings: digest_of(&spec.data.doc_embeddings),
            query_embeddings: spec.data.query_embeddings.as_deref().and_then(digest_of),
        },
        query_count: queries.len(),
        failed_queries: batch.failed_queries.clone(),
    };

    write_traces_jsonl(&exec.out_dir.join("traces.jsonl"), &batch.traces)?;
    write_manifest(&exec.out_dir.join("manifest.json"), &manifest)?;
    write_timings(&exec.out_dir.join("timings.json"), &batch.timings)?;
    let frozen = toml::to_string_pretty(spec)
        .map_err(|e| HiveError::InvalidConfig(format!("freezing config: {e}")))?;
    std::fs::write(exec.out_dir.join("resolved_config.toml"), frozen)
        .map_err(|e| HiveError::io("writing resolved_config.toml".to_string(), e))?;

    Ok(RunProducts {
        out_dir: exec.out_dir.clone(),
        traces: batch.traces,
        manifest,
    })
}

/// Evaluate a run's traces against qrels and write per-query plus
/// per-domain reports into `out_dir`.
pub fn evaluate_and_report(
    traces: &[StageTrace],
    qrels: &QrelsTable,
    k: usize,
    gain: GainFunction,
    out_dir: &Path,
    title: &str,
) -> Result<(Vec<EvalResult>, AggregateReport)> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HiveError::io(format!("creating {}", out_dir.display()), e))?;
    let results = evaluate_traces(traces, qrels, k, gain);
    let report = aggregate(&results);
    crate::report::write_per_query_csv(&out_dir.join("per_query.csv"), &results)?;
    crate::report::write_domain_csv(&out_dir.join("domains.csv"), &report)?;
    crate::report::write_domain_markdown(&out_dir.join("domains.md"), &report, title)?;
    Ok((results, report))
}

/// Outcome of one configuration inside an ablation or sweep.
#[derive(Debug)]
pub struct ConfigOutcome {
    pub label: String,
    pub results: Vec<EvalResult>,
    pub report: AggregateReport,
    pub run_dir: PathBuf,
}

fn qrels_for(spec: &RunSpec) -> Result<QrelsTable> {
    let path = spec.data.qrels.as_ref().ok_or_else(|| {
        HiveError::InvalidConfig("this command needs qrels, but none are configured".to_string())
    })?;
    load_qrels(path)
}

/// Run the canonical ablation grid and emit a comparison table.
pub fn run_ablation(
    spec: &RunSpec,
    exec: &ExecParams,
    profiles: &[RunProfile],
    k: usize,
    gain: GainFunction,
) -> Result<Vec<ConfigOutcome>> {
    let qrels = qrels_for(spec)?;
    let mut outcomes = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let mut run_spec = spec.clone();
        run_spec.name = profile.name().to_string();
        run_spec.pipeline = profile.apply(&spec.pipeline);
        let run_exec = ExecParams {
            out_dir: exec.out_dir.join(profile.name()),
            jobs: exec.jobs,
            cache_dir: exec.cache_dir.clone(),
        };
        let products = execute_run(&run_spec, &run_exec)?;
        let (results, report) = evaluate_and_report(
            &products.traces,
            &qrels,
            k,
            gain,
            &run_exec.out_dir.join("eval"),
            &format!("Configuration {}", profile.name()),
        )?;
        outcomes.push(ConfigOutcome {
            label: profile.name().to_string(),
            results,
            report,
            run_dir: products.out_dir,
        });
    }

    let rows: Vec<ComparisonRow> = outcomes
        .iter()
        .map(|o| ComparisonRow {
            label: o.label.clone(),
            ndcg: o.report.overall.mean_ndcg,
            recall: o.report.overall.mean_recall,
            query_count: o.report.overall.query_count,
        })
        .collect();
    crate::report::write_comparison_csv(&exec.out_dir.join("ablation.csv"), &rows, k)?;
    crate::report::write_comparison_markdown(
        &exec.out_dir.join("ablation.md"),
        &rows,
        k,
        "Component ablation",
    )?;
    Ok(outcomes)
}

/// Run the (k1, k2) grid with all stages on, plus a base row for reference.
pub fn run_sweep(
    spec: &RunSpec,
    exec: &ExecParams,
    k1_grid: &[usize],
    k2_grid: &[usize],
    k: usize,
    gain: GainFunction,
) -> Result<Vec<ConfigOutcome>> {
    let qrels = qrels_for(spec)?;
    let mut outcomes = Vec::new();

    let mut base_spec = spec.clone();
    base_spec.name = "base".to_string();
    base_spec.pipeline = RunProfile::Base.apply(&spec.pipeline);
    let base_exec = ExecParams {
        out_dir: exec.out_dir.join("base"),
        jobs: exec.jobs,
        cache_dir: exec.cache_dir.clone(),
    };
    let products = execute_run(&base_spec, &base_exec)?;
    let (results, report) = evaluate_and_report(
        &products.traces,
        &qrels,
        k,
        gain,
        &base_exec.out_dir.join("eval"),
        "Configuration base",
    )?;
    outcomes.push(ConfigOutcome {
        label: "base".to_string(),
        results,
        report,
        run_dir: products.out_dir,
    });

    for &k1 in k1_grid {
        for &k2 in k2_grid {
            let label = format!("k1={k1},k2={k2}");
            let dir_label = format!("k1_{k1}-k2_{k2}");
            let mut run_spec = spec.clone();
            run_spec.name = label.clone();
            run_spec.pipeline = PipelineConfig {
                k1,
                k2,
                stages: StageSet::ALL,
                pool_policy: PoolPolicy::Union,
                ..spec.pipeline.clone()
            };
            run_spec.pipeline.validate()?;
            let run_exec = ExecParams {
                out_dir: exec.out_dir.join(&dir_label),
                jobs: exec.jobs,
                cache_dir: exec.cache_dir.clone(),
            };
            let products = execute_run(&run_spec, &run_exec)?;
            let (results, report) = evaluate_and_report(
                &products.traces,
                &qrels,
                k,
                gain,
                &run_exec.out_dir.join("eval"),
                &format!("Configuration {label}"),
            )?;
            outcomes.push(ConfigOutcome {
                label,
                results,
                report,
                run_dir: products.out_dir,
            });
        }
    }

    let rows: Vec<ComparisonRow> = outcomes
        .iter()
        .map(|o| ComparisonRow {
            label: o.label.clone(),
            ndcg: o.report.overall.mean_ndcg,
            recall: o.report.overall.mean_recall,
            query_count: o.report.overall.query_count,
        })
        .collect();
    crate::report::write_comparison_csv(&exec.out_dir.join("sweep.csv"), &rows, k)?;
    crate::report::write_comparison_markdown(
        &exec.out_dir.join("sweep.md"),
        &rows,
        k,
        "Hyperparameter sweep",
    )?;
    Ok(outcomes)
}

/// Declarative run configuration file (TOML). Every section is optional;
/// command-line flags override file values. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub benchmark: Option<PathBuf>,
    pub data: Option<DataSection>,
    pub provider: Option<ProviderSpec>,
    pub embedder: Option<EmbedderSpec>,
    pub pipeline: Option<PipelineSection>,
    pub templates: Option<TemplatePaths>,
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub doc_embeddings: Option<PathBuf>,
    pub query_embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub k_f: Option<usize>,
    pub s_max: Option<i64>,
    pub s_base: Option<i64>,
    pub stages: Option<String>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub caption_in_secondary: Option<bool>,
    pub model: Option<String>,
    pub max_output_tokens: Option<u32>,
    pub per_doc_chars: Option<usize>,
    pub prompt_chars: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub cache_dir: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
        toml::from_str(&body)
            .map_err(|e| HiveError::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Default run-directory name: epoch seconds plus a digest of the frozen
/// configuration.
pub fn default_run_dir(root: &Path, spec: &RunSpec) -> PathBuf {
    use sha2::{Digest, Sha256};
    let frozen = toml::to_string(spec).unwrap_or_default();
    let digest = hex::encode(&Sha256::digest(frozen.as_bytes())[..4]);
    let epoch = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    root.join(format!("run-{epoch}-{digest}"))
}
