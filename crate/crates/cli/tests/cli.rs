use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dcmm::model::{DegreeVector, MembershipMatrix, MixingMatrix, ModelParams};
use serde_json::Value;

fn dcmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcmm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dcmm(args);
    assert!(
        out.status.success(),
        "dcmm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_params(path: &Path, n: usize) {
    let mixed = vec![vec![0.5, 0.5]];
    let n_mixed = n / 5;
    let params = ModelParams::new(
        DegreeVector::constant(n, 0.5).unwrap(),
        MembershipMatrix::pure_then_mixed(n - n_mixed, 2, &mixed, n_mixed).unwrap(),
        MixingMatrix::two_block(0.9).unwrap(),
    )
    .unwrap();
    fs::write(path, params.to_json().unwrap()).unwrap();
}

#[test]
fn generate_estimate_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    let graph = dir.path().join("graph.txt");
    let est = dir.path().join("pi_hat.json");
    let report = dir.path().join("loss.json");
    write_params(&params, 600);

    let p = params.to_str().unwrap();
    let g = graph.to_str().unwrap();
    let e = est.to_str().unwrap();
    ok(&["generate", "--params", p, "--seed", "3", "--out", g]);
    let first = fs::read(&graph).unwrap();
    ok(&["generate", "--params", p, "--seed", "3", "--out", g]);
    assert_eq!(first, fs::read(&graph).unwrap());

    ok(&["estimate", "--graph", g, "--K", "2", "--seed", "1", "--out", e]);
    let pi_hat = json(&est);
    assert_eq!(pi_hat["n"], 600);
    assert_eq!(pi_hat["K"], 2);
    let diag = json(&dir.path().join("pi_hat.json.diagnostics.json"));
    assert!(diag["eigenvalues"].as_array().unwrap().len() == 2);
    assert!(diag.get("dropped_count").is_some());

    ok(&[
        "evaluate",
        "--truth",
        p,
        "--estimate",
        e,
        "--theta",
        p,
        "--per-node",
        "--out",
        report.to_str().unwrap(),
    ]);
    let r = json(&report);
    let h = r["unweighted"].as_f64().unwrap();
    let l = r["weighted"].as_f64().unwrap();
    assert!(h < 0.1, "H = {h}");
    assert!((h - l).abs() < 1e-12);
    assert_eq!(r["per_node"].as_array().unwrap().len(), 600);
}

#[test]
fn evaluate_accepts_theta_array_and_prints_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    let theta = dir.path().join("theta.json");
    write_params(&params, 20);
    fs::write(&theta, serde_json::to_string(&vec![0.5; 20]).unwrap()).unwrap();
    let p = params.to_str().unwrap();
    let out = ok(&["evaluate", "--truth", p, "--estimate", p, "--theta", theta.to_str().unwrap()]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["weighted"].as_f64().unwrap(), 0.0);
    assert!(r.get("per_node").is_none());
}

#[test]
fn evaluate_rejects_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    write_params(&a, 20);
    write_params(&b, 30);
    let out = dcmm(&[
        "evaluate",
        "--truth",
        a.to_str().unwrap(),
        "--estimate",
        b.to_str().unwrap(),
        "--theta",
        a.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn packing_verify_certifies_two_block_family() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("cert.json");
    let dump = dir.path().join("family.json");
    ok(&[
        "packing-verify",
        "--n",
        "400",
        "--K",
        "2",
        "--P",
        "[[1.0,0.5],[0.5,1.0]]",
        "--theta-profile",
        "constant:0.5",
        "--c",
        "0.2",
        "--J-cap",
        "16",
        "--seed",
        "5",
        "--out",
        report.to_str().unwrap(),
        "--dump",
        dump.to_str().unwrap(),
    ]);
    let r = json(&report);
    assert_eq!(r["condition_i"], true);
    assert_eq!(r["condition_ii"], true);
    assert!(r["separation_constant"].as_f64().unwrap() > 0.0);
    assert!(r["beta_effective"].as_f64().unwrap() < 0.125);
    let d = json(&dump);
    assert_eq!(d["J"], r["J"]);
    assert_eq!(d["Pi"].as_array().unwrap().len(), r["J"].as_u64().unwrap() as usize + 1);
}

#[test]
fn packing_verify_rejects_wrong_k() {
    let out = dcmm(&[
        "packing-verify",
        "--n",
        "400",
        "--K",
        "3",
        "--P",
        "[[1.0,0.5],[0.5,1.0]]",
        "--c",
        "0.2",
    ]);
    assert!(!out.status.success());
}

#[test]
fn rate_sweep_writes_csvs_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    let out_dir = dir.path().join("out");
    let cfg = serde_json::json!({
        "cells": [
            {"n": 200, "K": 2, "P": [[1.0, 0.3], [0.3, 1.0]], "theta": {"kind": "constant", "value": 0.5}, "mixed_fraction": 0.2},
            {"n": 400, "K": 2, "P": [[1.0, 0.3], [0.3, 1.0]], "theta": {"kind": "constant", "value": 0.5}, "mixed_fraction": 0.2}
        ],
        "trials": 3,
        "base_seed": 9
    });
    fs::write(&config, cfg.to_string()).unwrap();
    ok(&[
        "rate-sweep",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    let trials = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 6);
    assert!(trials.starts_with("n,theta_bar,n_theta_bar_sq,K,trial,seed,loss_weighted,loss_unweighted,failed"));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn rate_sweep_requires_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    let cfg = serde_json::json!({
        "cells": [{"n": 100, "K": 2, "P": [[1.0, 0.3], [0.3, 1.0]], "theta": {"kind": "constant", "value": 0.5}}],
        "trials": 1,
        "base_seed": 0
    });
    fs::write(&config, cfg.to_string()).unwrap();
    let out = dcmm(&["rate-sweep", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
}
