//! Layered run-configuration resolution: built-in defaults, then the config
//! file, then the benchmark manifest for anything still missing, with
//! command-line flags overriding everything.

use crate::RunArgs;
use hive_core::error::{HiveError, Result};
use hive_core::harness::{
    load_benchmark, parse_stage_selection, DataPaths, EmbedderSpec, ExecParams, ProviderSpec,
    RunConfigFile, RunSpec, TemplatePaths,
};
use hive_core::pipeline::PipelineConfig;
use std::path::{Path, PathBuf};

fn pick<T: Clone>(flag: &Option<T>, file: Option<&T>, fallback: Option<&T>) -> Option<T> {
    flag.clone()
        .or_else(|| file.cloned())
        .or_else(|| fallback.cloned())
}

pub fn resolve_run(args: &RunArgs) -> Result<(RunSpec, ExecParams)> {
    let file = match &args.config {
        Some(path) => RunConfigFile::load(path)?,
        None => RunConfigFile::default(),
    };

    let benchmark_path = args.benchmark.clone().or(file.benchmark.clone());
    let benchmark = match &benchmark_path {
        Some(path) => {
            let (manifest, data) = load_benchmark(path)?;
            let dir = if path.is_dir() {
                path.clone()
            } else {
                path.parent()
                    .unwrap_or_else(|| Path::new("."))
                    .to_path_buf()
            };
            Some((manifest, data, dir))
        }
        None => None,
    };

    let file_data = file.data.clone().unwrap_or_default();
    let bench_data = benchmark.as_ref().map(|(_, data, _)| data);
    let require = |what: &str, value: Option<PathBuf>| {
        value.ok_or_else(|| {
            HiveError::InvalidConfig(format!(
                "no {what} configured (give --{}, a config file, or --benchmark)",
                what.replace('_', "-")
            ))
        })
    };
    let data = DataPaths {
        corpus: require(
            "corpus",
            pick(
                &args.corpus,
                file_data.corpus.as_ref(),
                bench_data.map(|d| &d.corpus),
            ),
        )?,
        queries: require(
            "queries",
            pick(
                &args.queries,
                file_data.queries.as_ref(),
                bench_data.map(|d| &d.queries),
            ),
        )?,
        qrels: pick(
            &args.qrels,
            file_data.qrels.as_ref(),
            bench_data.and_then(|d| d.qrels.as_ref()),
        ),
        doc_embeddings: require(
            "doc_embeddings",
            pick(
                &args.doc_embeddings,
                file_data.doc_embeddings.as_ref(),
                bench_data.map(|d| &d.doc_embeddings),
            ),
        )?,
        query_embeddings: pick(
            &args.query_embeddings,
            file_data.query_embeddings.as_ref(),
            bench_data.and_then(|d| d.query_embeddings.as_ref()),
        ),
    };

    // Pipeline: defaults <- file <- flags.
    let mut pipeline = PipelineConfig::default();
    if let Some(section) = &file.pipeline {
        if let Some(v) = section.k1 {
            pipeline.k1 = v;
        }
        if let Some(v) = section.k2 {
            pipeline.k2 = v;
        }
        if let Some(v) = section.k_f {
            pipeline.k_f = v;
        }
        if let Some(v) = section.s_max {
            pipeline.s_max = v;
        }
        if let Some(v) = section.s_base {
            pipeline.s_base = v;
        }
        if let Some(v) = section.temperature {
            pipeline.temperature = v;
        }
        if let Some(v) = section.seed {
            pipeline.seed = v;
        }
        if let Some(v) = section.caption_in_secondary {
            pipeline.caption_in_secondary = v;
        }
        if let Some(v) = &section.model {
            pipeline.model = v.clone();
        }
        if let Some(v) = section.max_output_tokens {
            pipeline.max_output_tokens = v;
        }
        if let Some(v) = section.per_doc_chars {
            pipeline.per_doc_chars = v;
        }
        if let Some(v) = section.prompt_chars {
            pipeline.prompt_chars = v;
        }
    }
    if let Some(v) = args.k1 {
        pipeline.k1 = v;
    }
    if let Some(v) = args.k2 {
        pipeline.k2 = v;
    }
    if let Some(v) = args.k_f {
        pipeline.k_f = v;
    }
    if let Some(v) = args.temperature {
        pipeline.temperature = v;
    }
    if let Some(v) = args.seed {
        pipeline.seed = v;
    }
    if let Some(v) = &args.model {
        pipeline.model = v.clone();
    }
    if args.no_caption_secondary {
        pipeline.caption_in_secondary = false;
    }

    // Stage selection: a profile reshapes the config; a raw set plugs in.
    let stage_selection = args
        .stages
        .clone()
        .or_else(|| file.pipeline.as_ref().and_then(|p| p.stages.clone()));
    let mut name = "full".to_string();
    if let Some(selection) = &stage_selection {
        let (profile, set) = parse_stage_selection(selection)?;
        match profile {
            Some(profile) => {
                pipeline = profile.apply(&pipeline);
                name = profile.name().to_string();
            }
            None => {
                pipeline.stages = set;
                name = format!("custom({selection})");
            }
        }
    }

    // Provider: flags first, then file, then mock when a benchmark supplies
    // an oracle state.
    let provider_kind = args.provider.clone().or_else(|| {
        file.provider.as_ref().map(|p| match p {
            ProviderSpec::Mock { .. } => "mock".to_string(),
            ProviderSpec::Openai { .. } => "openai".to_string(),
        })
    });
    let provider = match provider_kind.as_deref() {
        None | Some("mock") => {
            let file_oracle = match &file.provider {
                Some(ProviderSpec::Mock { oracle_state, .. }) => Some(oracle_state.clone()),
                _ => None,
            };
            let bench_oracle = benchmark
                .as_ref()
                .map(|(manifest, _, dir)| hive_core::harness::benchmark_oracle_path(manifest, dir));
            let oracle_state = args
                .oracle_state
                .clone()
                .or(file_oracle)
                .or(bench_oracle)
                .ok_or_else(|| {
                    HiveError::InvalidConfig(
                        "mock provider needs an oracle state (--oracle-state or --benchmark)"
                            .to_string(),
                    )
                })?;
            let file_noise = match &file.provider {
                Some(ProviderSpec::Mock { noise, .. }) => Some(*noise),
                _ => None,
            };
            ProviderSpec::Mock {
                oracle_state,
                noise: args.mock_noise.or(file_noise).unwrap_or(0.0),
            }
        }
        Some("openai") => {
            let file_openai = match &file.provider {
                Some(p @ ProviderSpec::Openai { .. }) => Some(p.clone()),
                _ => None,
            };
            let (f_url, f_env, f_timeout, f_retries, f_base_ms, f_inflight) = match file_openai {
                Some(ProviderSpec::Openai {
                    base_url,
                    api_key_env,
                    timeout_secs,
                    max_retries,
                    retry_base_ms,
                    max_inflight,
                }) => (
                    Some(base_url),
                    api_key_env,
                    Some(timeout_secs),
                    Some(max_retries),
                    Some(retry_base_ms),
                    Some(max_inflight),
                ),
                _ => (None, None, None, None, None, None),
            };
            ProviderSpec::Openai {
                base_url: args
                    .base_url
                    .clone()
                    .or(f_url)
                    .unwrap_or_else(|| "https://api.openai.com/v1".to_string()),
                api_key_env: args
                    .api_key_env
                    .clone()
                    .or(f_env)
                    .or(Some("HIVE_API_KEY".to_string())),
                timeout_secs: args.timeout_secs.or(f_timeout).unwrap_or(120),
                max_retries: args.max_retries.or(f_retries).unwrap_or(3),
                retry_base_ms: f_base_ms.unwrap_or(500),
                max_inflight: args.llm_inflight.or(f_inflight).unwrap_or(4),
            }
        }
        Some(other) => {
            return Err(HiveError::InvalidConfig(format!(
                "unknown provider '{other}' (expected mock or openai)"
            )))
        }
    };

    let embedder = file
        .embedder
        .clone()
        .or_else(|| {
            benchmark
                .as_ref()
                .map(|(manifest, _, _)| EmbedderSpec::Hash {
                    dim: manifest.embedder.dim,
                    seed: manifest.embedder.seed,
                })
        })
        .unwrap_or(EmbedderSpec::None);

    let file_templates = file.templates.clone().unwrap_or_default();
    let templates = TemplatePaths {
        hypothesis: args
            .hypothesis_template
            .clone()
            .or(file_templates.hypothesis),
        verify: args.verify_template.clone().or(file_templates.verify),
    };

    let spec = RunSpec {
        name,
        data,
        provider,
        embedder,
        pipeline,
        templates,
    };
    spec.pipeline.validate()?;

    let run_section = file.run.clone().unwrap_or_default();
    let out_dir = args
        .out
        .clone()
        .or(run_section.out_dir)
        .unwrap_or_else(|| hive_core::harness::default_run_dir(Path::new("runs"), &spec));
    let exec = ExecParams {
        out_dir,
        jobs: args.jobs.or(run_section.jobs).unwrap_or(1),
        cache_dir: args.cache_dir.clone().or(run_section.cache_dir),
    };
    Ok((spec, exec))
}
