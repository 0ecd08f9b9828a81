//! End-to-end checks of the `ger` binary on the bundled fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn ger(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ger")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_fixture(dir: &Path) -> PathBuf {
    let out = dir.join("pred.jsonl");
    let o = ger(&[
        "run",
        "--corpus",
        path(&fixture("corpus.json")),
        "--config",
        path(&fixture("mock.toml")),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn usage_and_config_errors_have_distinct_exit_codes() {
    assert_eq!(ger(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ger(&["run", "--corpus", "x.json"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[run]\nworkers = 1\nunknown_key = true\n").unwrap();
    let o = ger(&[
        "run",
        "--corpus",
        path(&fixture("corpus.json")),
        "--config",
        path(&bad),
        "--out",
        path(&dir.path().join("p.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = ger(&["build-kg", "--corpus", "/nonexistent.json", "--pair", "zoo", "--out", "/tmp/x.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_prints_perfect_tables_and_verifies_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let pred = run_fixture(dir.path());
    let manifest = dir.path().join("pred.jsonl.manifest.json");
    let o = ger(&[
        "evaluate",
        "--pred",
        path(&pred),
        "--gold",
        path(&fixture("corpus.json")),
        "--name",
        "GER",
        "--analysis",
        "--verify",
        path(&manifest),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let md = String::from_utf8(o.stdout).unwrap();
    assert!(md.contains("| Model | CST | INC | ADD | FGT | UFG |"));
    assert_eq!(md.matches("| GER | 1.0000 | 1.0000 | 1.0000 | 1.0000 | 1.0000 |").count(), 2);
    assert!(md.contains("### Support module"));

    // tampering with the predictions breaks verification
    let mut text = std::fs::read_to_string(&pred).unwrap();
    text.push('\n');
    std::fs::write(&pred, text).unwrap();
    let o = ger(&[
        "evaluate",
        "--pred",
        path(&pred),
        "--gold",
        path(&fixture("corpus.json")),
        "--verify",
        path(&manifest),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("predictions hash"));
}

#[test]
fn evaluate_json_and_mcnemar_need_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let pred = run_fixture(dir.path());
    let gold = fixture("corpus.json");
    let o = ger(&["evaluate", "--pred", path(&pred), "--gold", path(&gold), "--mcnemar"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ger(&["evaluate", "--pred", path(&pred), "--gold", path(&gold), "--format", "json"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["rows"][0]["metrics"]["total"], 30);
}

#[test]
fn sweep_prints_one_row_per_setting() {
    let o = ger(&[
        "sweep",
        "--corpus",
        path(&fixture("corpus.json")),
        "--config",
        path(&fixture("mock.toml")),
        "--tau-node",
        "0.1:0.3:0.1",
        "--agg",
        "mean,min",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows[0]["model"].as_str().unwrap().contains("node=0.100"));
    assert!(rows[5]["model"].as_str().unwrap().contains("agg=min"));
}

#[test]
fn build_kg_and_retrieve_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kg.json");
    let o = ger(&["build-kg", "--corpus", path(&fixture("corpus.json")), "--pair", "zoo", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(kg["graphs"]["pre"]["nodes"].as_array().is_some_and(|n| !n.is_empty()));
    assert!(kg["graphs"]["post"].is_object());

    let o = ger(&[
        "retrieve",
        "--corpus",
        path(&fixture("corpus.json")),
        "--pair",
        "zoo",
        "--triple",
        "a1",
        "--tau-node",
        "0",
        "--tau-triple",
        "0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["direction"], "pre");
    assert!(r["scored_nodes"][0]["label"].is_string());

    let o = ger(&[
        "retrieve",
        "--corpus",
        path(&fixture("corpus.json")),
        "--pair",
        "zoo",
        "--triple",
        "a1",
        "--tau-node",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
