//! End-to-end exercises of the `hive` binary: the synth/index/run/eval
//! flow, ablations, determinism of artifacts, and exit-code classes.

use std::path::Path;
use std::process::{Command, Output};

fn hive(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hive"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn synth_small(dir: &Path, out: &str, seed: u64) {
    let output = hive(
        &[
            "synth",
            "--out",
            out,
            "--seed",
            &seed.to_string(),
            "--docs",
            "300",
            "--queries",
            "30",
            "--dim",
            "96",
            "--vocab",
            "900",
        ],
        dir,
    );
    assert_ok(&output);
}

#[test]
fn synth_index_run_eval_flow() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 61);

    let output = hive(
        &[
            "index",
            "--corpus",
            "bench/corpus.jsonl",
            "--embeddings",
            "bench/doc_embeddings.bin",
            "--queries",
            "bench/queries.jsonl",
            "--qrels",
            "bench/qrels.tsv",
            "--out",
            "index.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("indexed 300 docs, dim 96"), "{stdout}");
    assert!(stdout.contains("referential integrity ok"), "{stdout}");

    let output = hive(
        &[
            "run",
            "--benchmark",
            "bench",
            "--out",
            "run1",
            "--jobs",
            "2",
        ],
        dir.path(),
    );
    assert_ok(&output);
    for artifact in [
        "run1/traces.jsonl",
        "run1/manifest.json",
        "run1/resolved_config.toml",
        "run1/timings.json",
    ] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }

    let output = hive(
        &[
            "eval",
            "--traces",
            "run1",
            "--qrels",
            "bench/qrels.tsv",
            "--out",
            "eval1",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("nDCG@10 1.0000"), "{stdout}");
    assert!(dir.path().join("eval1/per_query.csv").exists());
    assert!(dir.path().join("eval1/domains.md").exists());
}

#[test]
fn synth_twice_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "a", 62);
    synth_small(dir.path(), "b", 62);
    for name in [
        "corpus.jsonl",
        "queries.jsonl",
        "qrels.tsv",
        "doc_embeddings.bin",
        "query_embeddings.bin",
        "oracle_state.json",
        "benchmark.toml",
    ] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(name)).unwrap(),
            std::fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn base_stage_selection_and_k_override() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 63);

    let output = hive(
        &[
            "run",
            "--benchmark",
            "bench",
            "--stages",
            "base",
            "--out",
            "run_base",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run_base/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config_name"], "base");
    // Base retrieval is deepened to k_f so nDCG@10 is meaningful.
    assert_eq!(manifest["pipeline"]["k1"], 10);

    let output = hive(
        &[
            "eval",
            "--traces",
            "run_base",
            "--qrels",
            "bench/qrels.tsv",
            "--k",
            "5",
            "--out",
            "eval5",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let md = std::fs::read_to_string(dir.path().join("eval5/domains.md")).unwrap();
    assert!(md.contains("nDCG@5"), "{md}");
}

#[test]
fn eval_delta_of_identical_runs_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 64);
    assert_ok(&hive(
        &["run", "--benchmark", "bench", "--out", "run_a"],
        dir.path(),
    ));
    assert_ok(&hive(
        &["run", "--benchmark", "bench", "--out", "run_b"],
        dir.path(),
    ));

    // Identical configs produce byte-identical traces and manifests.
    assert_eq!(
        std::fs::read(dir.path().join("run_a/traces.jsonl")).unwrap(),
        std::fs::read(dir.path().join("run_b/traces.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("run_a/manifest.json")).unwrap(),
        std::fs::read(dir.path().join("run_b/manifest.json")).unwrap()
    );

    let output = hive(
        &[
            "eval",
            "--traces",
            "run_a",
            "--qrels",
            "bench/qrels.tsv",
            "--delta-against",
            "run_b",
            "--out",
            "delta",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("+0.0000"), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("delta/delta.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",+0.000000"), "nonzero delta row: {line}");
    }
}

#[test]
fn ablate_subset_and_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 65);
    let output = hive(
        &[
            "ablate",
            "--benchmark",
            "bench",
            "--configs",
            "base,full",
            "--out",
            "ablate",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let csv = std::fs::read_to_string(dir.path().join("ablate/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header + two rows: {csv}");
    assert!(lines[1].starts_with("base,"));
    assert!(lines[2].starts_with("full,"));
}

#[test]
fn sweep_emits_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 66);
    let output = hive(
        &[
            "sweep",
            "--benchmark",
            "bench",
            "--k1-grid",
            "3,5",
            "--k2-grid",
            "30",
            "--out",
            "sweep",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let csv = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    // Header + base + 2 grid rows.
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(
        csv.contains("\"k1=3,k2=30\"") || csv.contains("k1=3"),
        "{csv}"
    );
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();

    // Config error: invalid gap strength.
    let output = hive(
        &["synth", "--out", "x", "--gap-strength", "1.5"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "config error should exit 2");

    // Config error: k2 below k_f.
    synth_small(dir.path(), "bench", 67);
    let output = hive(
        &["run", "--benchmark", "bench", "--k2", "5", "--out", "bad"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "invalid k2 should exit 2");

    // Config error: remote provider without a credential.
    let output = hive(
        &[
            "run",
            "--benchmark",
            "bench",
            "--provider",
            "openai",
            "--api-key-env",
            "HIVE_KEY_THAT_IS_NOT_SET",
            "--out",
            "bad2",
        ],
        dir.path(),
    );
    assert_eq!(
        output.status.code(),
        Some(2),
        "missing credential should exit 2 before any query runs: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    // Data error: qrels referencing an unknown document.
    std::fs::write(dir.path().join("bad_qrels.tsv"), "q00000\tnot_a_doc\t1\n").unwrap();
    let output = hive(
        &[
            "index",
            "--corpus",
            "bench/corpus.jsonl",
            "--embeddings",
            "bench/doc_embeddings.bin",
            "--queries",
            "bench/queries.jsonl",
            "--qrels",
            "bad_qrels.tsv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(3), "violations should exit 3");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("not_a_doc"), "{stderr}");

    // Data error: malformed corpus line cites its position.
    std::fs::write(dir.path().join("bad.jsonl"), "{\"id\":\"d1\"}\n").unwrap();
    let output = hive(
        &[
            "index",
            "--corpus",
            "bad.jsonl",
            "--embeddings",
            "bench/doc_embeddings.bin",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains(":1:"));
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 68);
    std::fs::write(
        dir.path().join("run.toml"),
        "benchmark = \"bench\"\n[pipeline]\nk1 = 5\nmystery_knob = 1\n",
    )
    .unwrap();
    let output = hive(&["run", "--config", "run.toml", "--out", "run"], dir.path());
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("mystery_knob"));
}

#[test]
fn noisy_oracle_degrades_quality_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 72);
    for out in ["noisy_a", "noisy_b"] {
        assert_ok(&hive(
            &[
                "run",
                "--benchmark",
                "bench",
                "--mock-noise",
                "1.0",
                "--seed",
                "5",
                "--out",
                out,
            ],
            dir.path(),
        ));
    }
    assert_eq!(
        std::fs::read(dir.path().join("noisy_a/traces.jsonl")).unwrap(),
        std::fs::read(dir.path().join("noisy_b/traces.jsonl")).unwrap(),
        "noise must be a deterministic function of the seed"
    );
    let output = hive(
        &[
            "eval",
            "--traces",
            "noisy_a",
            "--qrels",
            "bench/qrels.tsv",
            "--out",
            "noisy_eval",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let ndcg: f64 = stdout
        .split("nDCG@10 ")
        .nth(1)
        .and_then(|s| s.split(',').next())
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(ndcg > 0.0 && ndcg < 0.95, "noisy oracle nDCG {ndcg}");
}

#[test]
fn index_snapshot_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 70);
    for out in ["snap_a.json", "snap_b.json"] {
        assert_ok(&hive(
            &[
                "index",
                "--corpus",
                "bench/corpus.jsonl",
                "--embeddings",
                "bench/doc_embeddings.bin",
                "--out",
                out,
            ],
            dir.path(),
        ));
    }
    assert_eq!(
        std::fs::read(dir.path().join("snap_a.json")).unwrap(),
        std::fs::read(dir.path().join("snap_b.json")).unwrap(),
        "snapshots of unchanged inputs differ"
    );
}

#[test]
fn benchmark_flag_accepts_the_manifest_file() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 71);
    let output = hive(
        &[
            "run",
            "--provider",
            "mock",
            "--benchmark",
            "bench/benchmark.toml",
            "--out",
            "run_file",
        ],
        dir.path(),
    );
    assert_ok(&output);
    assert!(dir.path().join("run_file/traces.jsonl").exists());
}

#[test]
fn custom_template_is_used_and_versioned() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 73);
    // A custom hypothesis template keeping the sentinel and the standard
    // section headers the mock oracle needs.
    std::fs::write(
        dir.path().join("house_style.txt"),
        "[[HIVE-HYPOTHESIS-V1]]\nHouse-style analyst briefing.\n\nQUERY TEXT:\n{query_text}\n\nIMAGE CAPTION:\n{image_caption}\n\nPROBE DOCUMENTS:\n{documents}\n\nINSTRUCTIONS:\nName the visual specifics the probe set misses, then finish with:\nCOMPENSATORY QUERY: <your query>\n",
    )
    .unwrap();
    assert_ok(&hive(
        &[
            "run",
            "--benchmark",
            "bench",
            "--hypothesis-template",
            "house_style.txt",
            "--out",
            "run_tpl",
        ],
        dir.path(),
    ));
    let manifest: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("run_tpl/manifest.json")).unwrap(),
    )
    .unwrap();
    let version = manifest["template_versions"]["hypothesis"].as_str().unwrap();
    assert!(version.starts_with("house_style:"), "{version}");
    // The run still solves the benchmark through the custom wording.
    let output = hive(
        &[
            "eval",
            "--traces",
            "run_tpl",
            "--qrels",
            "bench/qrels.tsv",
            "--out",
            "eval_tpl",
        ],
        dir.path(),
    );
    assert_ok(&output);
    assert!(String::from_utf8_lossy(&output.stdout).contains("nDCG@10 1.0000"));
}

#[test]
fn frozen_config_reflects_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "bench", 69);
    assert_ok(&hive(
        &[
            "run",
            "--benchmark",
            "bench",
            "--k1",
            "7",
            "--seed",
            "99",
            "--out",
            "run",
        ],
        dir.path(),
    ));
    let frozen = std::fs::read_to_string(dir.path().join("run/resolved_config.toml")).unwrap();
    assert!(frozen.contains("k1 = 7"), "{frozen}");
    assert!(frozen.contains("seed = 99"), "{frozen}");
}
