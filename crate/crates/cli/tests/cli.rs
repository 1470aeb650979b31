use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use txmonsim::model::{RecordKind, Trace};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

fn txmonsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_txmonsim")).args(args).env_remove("TXMONSIM_SUITE_DIR").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flashloan_trmon_commits_and_matches_golden_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = txmonsim(&["run", s(&fixture("flashloan_trmon.scenario.json")), "--trace", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("Committed"));

    let written = std::fs::read_to_string(&out).unwrap();
    let golden = std::fs::read_to_string(fixture("flashloan_trmon.trace.jsonl")).unwrap();
    assert_eq!(written, golden);

    let trace = Trace::from_jsonl(&written).unwrap();
    for kind in [RecordKind::Init, RecordKind::Op, RecordKind::Term] {
        assert!(trace.records.iter().any(|r| r.kind == kind), "no {kind:?} record");
    }
    assert_eq!(trace.to_jsonl(), written, "trace files round-trip");
}

#[test]
fn flashloan_malicious_aborts_on_term() {
    let o = txmonsim(&["--format", "json", "run", s(&fixture("flashloan_malicious.scenario.json"))]);
    assert_eq!(code(&o), 1);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["all_committed"], false);
    assert_eq!(doc["transactions"][0]["outcome"]["reason"]["reason"], "MonitorTermFail");
}

#[test]
fn scenario_errors_exit_2_with_diagnostics() {
    let o = txmonsim(&["run", s(&fixture("missing_contract.scenario.json"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("transactions[0]"), "{}", stderr(&o));

    let o = txmonsim(&["run", s(&fixture("bad_json.scenario.json"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    let o = txmonsim(&["run", "no/such/file.json"]);
    assert_eq!(code(&o), 2);

    let o = txmonsim(&["run", s(&fixture("dfs_o1.scenario.json")), "--mechanisms", "first,warp"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn overrides_change_the_engine() {
    // without transaction monitors nothing stops the malicious client
    let o = txmonsim(&["run", s(&fixture("flashloan_malicious.scenario.json")), "--monitor-mode", "none"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = txmonsim(&["run", s(&fixture("flashloan_trmon.scenario.json")), "--scheduler", "bfs"]);
    assert_eq!(code(&o), 0);
    let o = txmonsim(&["run", s(&fixture("flashloan_trmon.scenario.json")), "--gas", "3"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("GasExhausted"));
}

#[test]
fn suite_dir_resolves_relative_paths() {
    let o = Command::new(env!("CARGO_BIN_EXE_txmonsim"))
        .args(["run", "flashloan_trmon.scenario.json"])
        .env("TXMONSIM_SUITE_DIR", fixtures())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn diff_traces() {
    let (o1, o2) = (fixture("dfs_o1.trace.jsonl"), fixture("dfs_o2.trace.jsonl"));
    let same = txmonsim(&["diff", s(&o1), s(&o1)]);
    assert_eq!(code(&same), 0);

    let first_a = txmonsim(&["diff", s(&o1), s(&o2), "--subject", "A", "--upto", "0"]);
    assert_eq!(code(&first_a), 0, "{}", stdout(&first_a));

    let all_a = txmonsim(&["diff", s(&o1), s(&o2), "--subject", "A"]);
    assert_eq!(code(&all_a), 1);
    assert!(stdout(&all_a).contains("invocation 1"), "{}", stdout(&all_a));

    let full = txmonsim(&["--format", "json", "diff", s(&o1), s(&o2)]);
    assert_eq!(code(&full), 1);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&full)).unwrap();
    assert_eq!(doc["record"], 0);
    assert_eq!(doc["field"], "queue_before");
}

#[test]
fn golden_dfs_traces_are_current() {
    let dir = tempfile::tempdir().unwrap();
    for o in ["o1", "o2"] {
        let out = dir.path().join(format!("{o}.jsonl"));
        txmonsim(&["run", s(&fixture(&format!("dfs_{o}.scenario.json"))), "--trace", s(&out)]);
        let golden = std::fs::read_to_string(fixture(&format!("dfs_{o}.trace.jsonl"))).unwrap();
        assert_eq!(std::fs::read_to_string(out).unwrap(), golden);
    }
}

#[test]
fn counterexample_suite_and_explain() {
    let dir = tempfile::tempdir().unwrap();
    let o = txmonsim(&["suite", "counterexamples", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("5 reports, all verified: true"));
    let mut files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 5);

    let report = dir.path().join("dfs_only_once.json");
    let o = txmonsim(&["explain", s(&report)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("verified: true"));

    // flip a recorded verdict: recomputation no longer matches
    let text = std::fs::read_to_string(&report).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let eq = &mut doc["obs_claims"][0]["check"]["equal"];
    *eq = serde_json::Value::Bool(!eq.as_bool().unwrap());
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&doc).unwrap()).unwrap();
    let o = txmonsim(&["explain", s(&tampered)]);
    assert_eq!(code(&o), 1);

    let o = txmonsim(&["explain", s(&fixture("bad_json.scenario.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn flashloan_suite_agrees() {
    let o = txmonsim(&["suite", "flashloan"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("trmon/dfs"));
}

#[test]
fn equivalence_suite_reports_pass_counts() {
    let o = txmonsim(&["--format", "json", "suite", "equivalence", "--cases", "4", "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["seed"], 11);
    for p in doc["pairs"].as_array().unwrap() {
        assert_eq!(p["passed"], 4, "{p}");
    }
}

#[test]
fn outputs_are_deterministic() {
    let path = fixture("dfs_o2.scenario.json");
    let args = ["--format", "json", "run", s(&path)];
    let (a, b) = (txmonsim(&args), txmonsim(&args));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(code(&a), code(&b));
}
