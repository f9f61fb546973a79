//! End-to-end tests against the built binary: exit codes, determinism,
//! format switches, and the generate-to-report pipeline.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn reclens() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reclens"))
}

fn run(args: &[&str]) -> Output {
    reclens().args(args).output().expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn generate_log(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec![
        "generate",
        "--seed",
        "11",
        "--customers",
        "60",
        "--days",
        "3",
        "--output",
        &path,
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in [
        "validate",
        "metrics",
        "ttest",
        "correlate",
        "behavior",
        "filter-sim",
        "generate",
        "report",
    ] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
        assert!(!out.stdout.is_empty());
    }
    assert!(run(&["--help"]).status.success());
}

#[test]
fn missing_input_exits_one() {
    let out = run(&["metrics", "--input", "does-not-exist.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does-not-exist.jsonl"));
}

#[test]
fn unknown_flag_exits_two() {
    let out = run(&["metrics", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_pair_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let out = run(&["ttest", "--input", &log, "--pair", "CTR"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["ttest", "--input", &log, "--pair", "CTR,bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_log_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "# header\n{\"type\":\"click\",\"customer\":\"c\"}\n").unwrap();
    let out = run(&["validate", "--input", &path.display().to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn metrics_happy_path_prints_all_six() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let out = run(&["metrics", "--input", &log]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    for label in ["CTR", "CTR-NoRepeat", "ATC-TR", "BTR", "Click & Buy rate"] {
        assert!(text.contains(label), "missing {label} in:\n{text}");
    }
}

#[test]
fn generate_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_log(dir.path(), "a.jsonl", &[]);
    let b = generate_log(dir.path(), "b.jsonl", &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.jsonl").display().to_string();
    let out = run(&[
        "generate",
        "--seed",
        "12",
        "--customers",
        "60",
        "--days",
        "3",
        "--output",
        &c,
    ]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn generate_verify_passes_on_default_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.jsonl").display().to_string();
    let out = run(&["generate", "--seed", "5", "--output", &path, "--verify"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("all pass: yes"));
}

#[test]
fn generate_accepts_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    std::fs::write(
        &cfg,
        r#"{"customers": 25, "days": 2, "click_prob": 0.3, "catalog_size": 500}"#,
    )
    .unwrap();
    let path = dir.path().join("g.jsonl").display().to_string();
    let out = run(&[
        "generate",
        "--seed",
        "9",
        "--config",
        &cfg.display().to_string(),
        "--output",
        &path,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().count() > 50);
}

#[test]
fn report_json_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let out1 = run(&["report", "--input", &log, "--format", "json"]);
    assert!(out1.status.success());
    let out2 = run(&["report", "--input", &log, "--format", "json"]);
    assert_eq!(
        out1.stdout, out2.stdout,
        "report bytes must be deterministic"
    );
    let parsed: serde_json::Value = serde_json::from_slice(&out1.stdout).unwrap();
    assert_eq!(parsed["ttests"].as_array().unwrap().len(), 2);
    assert_eq!(parsed["metrics"].as_array().unwrap().len(), 6);
}

#[test]
fn report_threads_flag_never_changes_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let single = run(&[
        "--threads",
        "1",
        "report",
        "--input",
        &log,
        "--format",
        "json",
    ]);
    let multi = run(&[
        "--threads",
        "4",
        "report",
        "--input",
        &log,
        "--format",
        "json",
    ]);
    assert!(single.status.success() && multi.status.success());
    assert_eq!(single.stdout, multi.stdout);
}

#[test]
fn env_var_sets_threads() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let out = reclens()
        .env("RECLENS_THREADS", "2")
        .args(["metrics", "--input", &log, "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn stdin_pipeline_generate_to_report() {
    let mut gen = reclens()
        .args([
            "generate",
            "--seed",
            "11",
            "--customers",
            "60",
            "--days",
            "3",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let log_bytes = {
        let mut out = Vec::new();
        std::io::Read::read_to_end(gen.stdout.as_mut().unwrap(), &mut out).unwrap();
        assert!(gen.wait().unwrap().success());
        out
    };
    let mut report = reclens()
        .args(["report", "--input", "-", "--format", "json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    report
        .stdin
        .as_mut()
        .unwrap()
        .write_all(&log_bytes)
        .unwrap();
    let out = report.wait_with_output().unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed["hits"].as_u64().unwrap() > 0);
    assert_eq!(parsed["source_name"], "stdin");
}

#[test]
fn ttest_custom_pair_and_table_format() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let out = run(&["ttest", "--input", &log, "--pair", "CTR,BTR"]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    assert!(text.contains("t-test for CTR and BTR"));
    assert!(text.contains("p-value"));
}

#[test]
fn filter_sim_defaults_to_json() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let out = run(&["filter-sim", "--input", &log, "--atc-days", "3"]);
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed["pairs"].as_u64().unwrap() > 0);
    // disabling both filters removes nothing
    let off = run(&[
        "filter-sim",
        "--input",
        &log,
        "--no-clicked-today",
        "--no-atc-filter",
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&off.stdout).unwrap();
    assert_eq!(parsed["pairs_removed"], 0);
}

#[test]
fn validate_reports_counts_and_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.jsonl");
    std::fs::write(
        &path,
        concat!(
            "{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T09:00:00Z\"}\n",
            "{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}\n",
        ),
    )
    .unwrap();
    let out = run(&["validate", "--input", &path.display().to_string()]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    assert!(text.contains("hits: 1"));
    assert!(text.contains("precede the first hit"));
}

#[test]
fn behavior_table_lists_indicators() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let out = run(&["behavior", "--input", &log]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    for needle in [
        "customers",
        "hits/customer",
        "buyers/customer",
        "clicks/customer",
        "clicks/buy",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn window_flags_change_attribution() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path(), "log.jsonl", &[]);
    let wide = run(&["metrics", "--input", &log, "--format", "json"]);
    let narrow = run(&[
        "metrics",
        "--input",
        &log,
        "--click-window",
        "1s",
        "--atc-window",
        "2s",
        "--buy-window",
        "3s",
        "--format",
        "json",
    ]);
    let get_ctr = |o: &Output| {
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["metrics"][0]["rate"].as_f64().unwrap()
    };
    assert!(get_ctr(&narrow) < get_ctr(&wide));
    let bad = run(&["metrics", "--input", &log, "--click-window", "2h"]);
    assert_eq!(
        bad.status.code(),
        Some(2),
        "click > atc window is a usage error"
    );
}
