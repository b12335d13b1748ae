//! `hive` — command-line front end: index validation, pipeline runs,
//! evaluation, ablations, hyperparameter sweeps, and synthetic benchmark
//! generation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/ingestion error,
//! 4 provider error, 5 internal invariant violation, 1 anything else.

mod resolve;

use clap::{Args, Parser, Subcommand};
use hive_core::error::{ErrorClass, HiveError};
use hive_core::eval::GainFunction;
use hive_core::harness::{self, RunProfile};
use hive_core::ingest::{self, StoreKind};
use hive_core::synthbench;
use hive_core::trace::read_traces_jsonl;
use hive_core::vector_index::Index;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hive",
    version,
    about = "Four-stage retrieval engine and evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus + embeddings pair and persist an index snapshot.
    Index(IndexArgs),
    /// Execute the pipeline over a query set and write traces + manifest.
    Run(RunArgs),
    /// Score traces against qrels; optionally diff two runs.
    Eval(EvalArgs),
    /// Run the canonical stage-ablation configurations and compare them.
    Ablate(AblateArgs),
    /// Run a (k1, k2) grid and compare against the base retriever.
    Sweep(SweepArgs),
    /// Generate a synthetic benchmark with planted visual gaps.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// Corpus JSONL (objects with "id", "text").
    #[arg(long)]
    corpus: PathBuf,
    /// Document embeddings (JSONL or binary).
    #[arg(long)]
    embeddings: PathBuf,
    /// Optional query set for referential checks.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Optional qrels for referential checks.
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Where to write the index snapshot (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    /// Declarative run configuration (TOML); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark directory or benchmark.toml; supplies data paths, the hash
    /// embedder, and the mock oracle state.
    #[arg(long)]
    benchmark: Option<PathBuf>,

    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    doc_embeddings: Option<PathBuf>,
    #[arg(long)]
    query_embeddings: Option<PathBuf>,

    /// Provider kind: "mock" or "openai".
    #[arg(long)]
    provider: Option<String>,
    /// Mock provider: oracle state JSON.
    #[arg(long)]
    oracle_state: Option<PathBuf>,
    /// Mock provider: fraction of adjacent ranking decisions to flip.
    #[arg(long)]
    mock_noise: Option<f64>,
    /// Remote provider: OpenAI-compatible base URL.
    #[arg(long)]
    base_url: Option<String>,
    /// Remote provider: environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Bound on concurrent remote LLM calls.
    #[arg(long)]
    llm_inflight: Option<usize>,

    /// Model name sent in chat requests.
    #[arg(long)]
    model: Option<String>,
    /// Stage selection: a profile (base, s2_only, s4_only, s23, full),
    /// "none", or a comma list of {synthesis,secondary,verify}.
    #[arg(long)]
    stages: Option<String>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long = "kf")]
    k_f: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable caption concatenation in the secondary retrieval text.
    #[arg(long)]
    no_caption_secondary: bool,
    /// Custom hypothesis template file.
    #[arg(long)]
    hypothesis_template: Option<PathBuf>,
    /// Custom verify template file.
    #[arg(long)]
    verify_template: Option<PathBuf>,

    /// Output directory (default: ./runs/run-<epoch>-<digest>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for query processing.
    #[arg(long)]
    jobs: Option<usize>,
    /// Response cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Trace file (traces.jsonl) or a run directory containing one.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Evaluation cutoff.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// nDCG gain: "exponential" or "linear".
    #[arg(long, default_value = "exponential")]
    gain: String,
    /// Second trace file; emits a B-minus-A delta table (A = --traces).
    #[arg(long)]
    delta_against: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma list of configurations (default: base,s2_only,s4_only,s23,full).
    #[arg(long)]
    configs: Option<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "exponential")]
    gain: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Probe sizes, comma separated.
    #[arg(long, default_value = "3,5,10")]
    k1_grid: String,
    /// Secondary budgets, comma separated.
    #[arg(long, default_value = "30,50")]
    k2_grid: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "exponential")]
    gain: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    docs: usize,
    #[arg(long, default_value_t = 200)]
    queries: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 8000)]
    vocab: usize,
    #[arg(long, default_value_t = 1.0)]
    gap_strength: f64,
    #[arg(long, default_value_t = 8)]
    distractors: usize,
    /// Domain labels, comma separated.
    #[arg(long, default_value = "circuits,charts,diagrams,screens")]
    domains: String,
}

fn parse_gain(s: &str) -> Result<GainFunction, HiveError> {
    match s {
        "exponential" => Ok(GainFunction::Exponential),
        "linear" => Ok(GainFunction::Linear),
        other => Err(HiveError::InvalidConfig(format!(
            "unknown gain function '{other}' (expected exponential or linear)"
        ))),
    }
}

fn parse_grid(s: &str, what: &str) -> Result<Vec<usize>, HiveError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| HiveError::InvalidConfig(format!("bad {what} entry '{p}'")))
        })
        .collect()
}

#[derive(Serialize)]
struct IndexSnapshot {
    dim: usize,
    doc_count: usize,
    corpus_digest: String,
    embeddings_digest: String,
    doc_ids: Vec<String>,
    norms: Vec<f64>,
}

fn cmd_index(args: IndexArgs) -> Result<(), HiveError> {
    let docs = ingest::load_corpus(&args.corpus)?;
    let store = ingest::load_embeddings(&args.embeddings, StoreKind::Document)?;
    let index = Index::build(&docs, &store)?;
    println!("indexed {} docs, dim {}", index.len(), index.dim());

    if let Some(qrels_path) = &args.qrels {
        let qrels = ingest::load_qrels(qrels_path)?;
        let queries = match &args.queries {
            Some(path) => ingest::load_queries(path)?,
            // Without a query file, only the document side is checkable:
            // synthesize a query set covering every judged id.
            None => qrels
                .entries
                .keys()
                .map(|id| ingest::QueryRecord {
                    query_id: id.clone(),
                    text: String::new(),
                    image_caption: String::new(),
                    image_ref: None,
                    domain: "default".to_string(),
                })
                .collect(),
        };
        let violations = ingest::validate_references(&docs, &queries, &qrels);
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("violation [{}]: {}", v.kind, v.detail);
            }
            return Err(HiveError::ParseLine {
                path: qrels_path.clone(),
                line: 0,
                message: format!("{} referential integrity violations", violations.len()),
            });
        }
        println!(
            "referential integrity ok ({} queries judged)",
            qrels.entries.len()
        );
    }

    if let Some(out) = &args.out {
        let snapshot = IndexSnapshot {
            dim: index.dim(),
            doc_count: index.len(),
            corpus_digest: hive_core::trace::file_digest(&args.corpus)?,
            embeddings_digest: hive_core::trace::file_digest(&args.embeddings)?,
            doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            norms: index.norms().to_vec(),
        };
        let body = serde_json::to_vec_pretty(&snapshot).map_err(|e| HiveError::Json {
            context: "serializing index snapshot".to_string(),
            source: e,
        })?;
        std::fs::write(out, body)
            .map_err(|e| HiveError::io(format!("writing {}", out.display()), e))?;
        println!("snapshot written to {}", out.display());
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), HiveError> {
    let (spec, exec) = resolve::resolve_run(&args)?;
    let products = harness::execute_run(&spec, &exec)?;
    println!(
        "run '{}' complete: {} queries, {} failed, traces in {}",
        products.manifest.config_name,
        products.manifest.query_count,
        products.manifest.failed_queries.len(),
        products.out_dir.display()
    );
    Ok(())
}

fn traces_path(path: &std::path::Path) -> PathBuf {
    if path.is_dir() {
        path.join("traces.jsonl")
    } else {
        path.to_path_buf()
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), HiveError> {
    let gain = parse_gain(&args.gain)?;
    let traces = read_traces_jsonl(&traces_path(&args.traces))?;
    let qrels = ingest::load_qrels(&args.qrels)?;
    let (results, report) = harness::evaluate_and_report(
        &traces,
        &qrels,
        args.k,
        gain,
        &args.out,
        &format!("Per-domain results @{}", args.k),
    )?;
    println!(
        "evaluated {} queries: nDCG@{} {:.4}, recall@{} {:.4}",
        report.overall.query_count,
        args.k,
        report.overall.mean_ndcg,
        args.k,
        report.overall.mean_recall
    );

    if let Some(other) = &args.delta_against {
        let other_traces = read_traces_jsonl(&traces_path(other))?;
        let other_results = hive_core::eval::evaluate_traces(&other_traces, &qrels, args.k, gain);
        let delta = hive_core::eval::compare_runs(&results, &other_results)?;
        hive_core::report::write_delta_csv(&args.out.join("delta.csv"), &delta)?;
        hive_core::report::write_delta_markdown(
            &args.out.join("delta.md"),
            &delta,
            "Run comparison",
        )?;
        println!(
            "delta (B - A) overall nDCG@{}: {:+.4}",
            args.k, delta.overall.delta_ndcg
        );
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<(), HiveError> {
    let gain = parse_gain(&args.gain)?;
    let (spec, exec) = resolve::resolve_run(&args.run)?;
    let profiles: Vec<RunProfile> = match &args.configs {
        None => RunProfile::CANONICAL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|name| {
                RunProfile::parse(name.trim()).ok_or_else(|| {
                    HiveError::InvalidConfig(format!("unknown configuration '{name}'"))
                })
            })
            .collect::<Result<_, _>>()?,
    };
    let outcomes = harness::run_ablation(&spec, &exec, &profiles, args.k, gain)?;
    println!("configuration        nDCG@{:<3} recall@{}", args.k, args.k);
    for outcome in &outcomes {
        println!(
            "{:<20} {:>7.4} {:>8.4}",
            outcome.label, outcome.report.overall.mean_ndcg, outcome.report.overall.mean_recall
        );
    }
    println!("reports in {}", exec.out_dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), HiveError> {
    let gain = parse_gain(&args.gain)?;
    let (spec, exec) = resolve::resolve_run(&args.run)?;
    let k1_grid = parse_grid(&args.k1_grid, "k1 grid")?;
    let k2_grid = parse_grid(&args.k2_grid, "k2 grid")?;
    let outcomes = harness::run_sweep(&spec, &exec, &k1_grid, &k2_grid, args.k, gain)?;
    println!("configuration        nDCG@{}", args.k);
    for outcome in &outcomes {
        println!(
            "{:<20} {:>7.4}",
            outcome.label, outcome.report.overall.mean_ndcg
        );
    }
    println!("reports in {}", exec.out_dir.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), HiveError> {
    let spec = synthbench::SynthSpec {
        seed: args.seed,
        n_docs: args.docs,
        n_queries: args.queries,
        dim: args.dim,
        vocab_size: args.vocab,
        gap_strength: args.gap_strength,
        distractors_per_query: args.distractors,
        domains: args
            .domains
            .split(',')
            .map(|d| d.trim().to_string())
            .filter(|d| !d.is_empty())
            .collect(),
    };
    let bench = synthbench::generate(&spec)?;
    let manifest = synthbench::write_to_dir(&bench, &args.out)?;
    println!(
        "benchmark '{}' written to {}",
        manifest.name,
        args.out.display()
    );
    println!("{}", synthbench::describe(&bench));
    Ok(())
}

fn exit_code_for(err: &HiveError) -> u8 {
    match err.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Provider => 4,
        ErrorClass::Internal => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Index(args) => cmd_index(args),
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
