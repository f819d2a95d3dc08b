use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cckit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cckit")).args(args).env("CCKIT_LOG", "off").output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn metric_suite_passes() {
    let out = cckit(&["check", "--suite", "metric"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["verdicts"]["passed"], true);
}

#[test]
fn expr_suite_passes() {
    let out = cckit(&["check", "--suite", "expr", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json_of(&out)["result"]["expr"]["parsed"].as_u64().unwrap() > 0);
}

#[test]
fn symmetric_economy() {
    let f = fixture("econ_symmetric.json");
    let out = cckit(&["equilibrium", f.to_str().unwrap(), "--tol", "1e-6"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let x0 = &v["result"]["x0"];
    assert!((x0[0].as_f64().unwrap() - 0.5).abs() < 1e-4);
    assert!((x0[1].as_f64().unwrap() - 0.5).abs() < 1e-4);
    assert_eq!(v["instance_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn escaping_sequence_exits_2() {
    let f = fixture("escaping.json");
    let out = cckit(&["extract", f.to_str().unwrap(), "--tol", "1e-6"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json_of(&out);
    assert_eq!(v["error"]["kind"], "unbounded");
    let eps = v["error"]["certificate"]["eps"].as_f64().unwrap();
    assert!(eps > 0.5);
    assert!(!v["error"]["certificate"]["indices"].as_array().unwrap().is_empty());
}

#[test]
fn input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = cckit(&["minimize", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["error"]["kind"], "invalid_input");

    let expr = dir.path().join("expr.json");
    std::fs::write(&expr, r#"{"space": {"atoms": ["a"], "probs": ["1"]}, "functional": "x^^2", "set": {"box": {"lower": [0], "upper": [1]}}}"#).unwrap();
    let out = cckit(&["minimize", expr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["error"]["kind"], "parse");

    let out = cckit(&["kkm", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["error"]["kind"], "io");

    assert_eq!(cckit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cckit(&["saddle"]).status.code(), Some(1));
}

#[test]
fn solver_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("empty.json");
    std::fs::write(
        &f,
        r#"{"space": {"atoms": ["a", "b"], "probs": ["0.5", "0.5"]},
            "sets": [{"box": {"lower": [0, 0], "upper": [0.1, 1]}}, {"box": {"lower": [0, 0], "upper": [1, 0.1]}}]}"#,
    )
    .unwrap();
    let out = cckit(&["kkm", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "kkm_violation");
}

#[test]
fn every_fixture_solves() {
    for (cmd, name) in [
        ("minimize", "jensen.json"),
        ("saddle", "pennies.json"),
        ("kkm", "kkm_simplex.json"),
        ("extract", "alternating.json"),
        ("equilibrium", "econ_asymmetric.json"),
        ("check", "kkm_simplex.json"),
        ("check", "econ_asymmetric.json"),
        ("check", "jensen.json"),
    ] {
        let f = fixture(name);
        let out = cckit(&[cmd, f.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{cmd} {name}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn out_and_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("cert.json");
    let trace = dir.path().join("trace.jsonl");
    let f = fixture("alternating.json");
    let out = cckit(&["extract", f.to_str().unwrap(), "--out", out_path.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(cert["verdicts"]["u_nonincreasing"], true);
    let lines: Vec<Value> = std::fs::read_to_string(&trace).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), cert["result"]["tails"].as_array().unwrap().len());
    assert!(lines[0]["metric_d_prev"].is_null());
    assert!(lines.iter().all(|l| l.get("D").is_some() && l.get("weights").is_some()));
}

#[test]
fn horizon_flag_truncates() {
    let f = fixture("alternating.json");
    let out = cckit(&["extract", f.to_str().unwrap(), "--horizon", "40"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["result"]["horizon"], 40);
}

#[test]
fn timing_is_opt_in() {
    let f = fixture("pennies.json");
    let plain = json_of(&cckit(&["saddle", f.to_str().unwrap()]));
    assert!(plain.get("wall_time_s").is_none());
    let timed = json_of(&cckit(&["saddle", f.to_str().unwrap(), "--timing"]));
    assert!(timed["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    for (cmd, name) in [("equilibrium", "econ_asymmetric.json"), ("kkm", "kkm_simplex.json"), ("saddle", "pennies.json")] {
        let f = fixture(name);
        let a = cckit(&[cmd, f.to_str().unwrap()]);
        let b = cckit(&[cmd, f.to_str().unwrap()]);
        assert_eq!(a.stdout, b.stdout, "{cmd} {name}");
    }
}
