use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn outbreak(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outbreak"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = outbreak(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(dir: &Path, path: &str) -> String {
    std::fs::read_to_string(dir.join(path)).unwrap()
}

fn csv_rows(dir: &Path, path: &str) -> Vec<Vec<String>> {
    read(dir, path)
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

/// Short simulated series and a quick two-chain fit of model I.
fn fitted() -> TempDir {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("sim.conf"), "variant=I\ntimes=36\n").unwrap();
    std::fs::write(d.join("fit.conf"), "variant=I\nn_chains=2\nn_iterations=1200\nn_warmup=600\n").unwrap();
    ok(d, &["simulate", "--config", "sim.conf", "--seed", "11", "--out", "sim"]);
    let fit = outbreak(d, &["fit", "--config", "fit.conf", "--data", "sim", "--out", "fit", "--rhat-gate", "100"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    tmp
}

#[test]
fn simulate_default_shape_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--seed", "5", "--out", "a"]);
    ok(d, &["simulate", "--seed", "5", "--out", "b"]);
    let counts = csv_rows(d, "a/counts.csv");
    assert_eq!(counts.len(), 10);
    assert!(counts.iter().all(|r| r.len() == 61));
    for f in ["counts.csv", "populations.csv", "adjacency.edges", "truth.json", "simulation.conf"] {
        assert_eq!(read(d, &format!("a/{f}")), read(d, &format!("b/{f}")), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(d, "a/manifest.json")).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 5);
}

#[test]
fn variant_zero_truth_is_flagged_inert() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("sim.conf"), "variant=0\n").unwrap();
    let out = ok(d, &["simulate", "--config", "sim.conf", "--out", "sim"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no outbreak term"));
    let truth: serde_json::Value = serde_json::from_str(&read(d, "sim/truth.json")).unwrap();
    assert_eq!(truth["outbreaks_inert"], true);
    assert_eq!(truth["outbreaks"].as_array().unwrap().len(), 9);
}

#[test]
fn pipeline_runs_and_replays() {
    let tmp = fitted();
    let d = tmp.path();
    let rhat = csv_rows(d, "fit/rhat.csv");
    assert_eq!(rhat[0], ["parameter", "rhat", "degenerate"]);
    assert!(d.join("fit/chain1.csv").exists() && d.join("fit/chain2.csv").exists());
    assert!(read(d, "fit/acceptance.csv").contains("gamma01"));

    ok(d, &["detect", "--data", "sim", "--fit", "fit", "--out", "det"]);
    let probs = csv_rows(d, "det/outbreak_probabilities.csv");
    assert_eq!(probs.len(), 37);
    assert_eq!(probs[0][0], "time");
    for row in &probs[1..] {
        assert_eq!(row.len(), 10);
        assert!(row[1..].iter().all(|v| (0.0..=1.0).contains(&v.parse::<f64>().unwrap())));
    }

    ok(d, &["ppc", "--data", "sim", "--fit", "fit", "--out", "ppc"]);
    let ppc = csv_rows(d, "ppc/ppc.csv");
    assert_eq!(ppc[0], ["time", "observed", "lower", "mean", "upper"]);
    assert_eq!(ppc.len(), 37);

    ok(
        d,
        &["roc", "--truth", "sim/truth.json", "--probabilities", "det/outbreak_probabilities.csv", "--subset", "large=L1,L2,L3,L4", "--out", "roc"],
    );
    let auc = csv_rows(d, "roc/auc.csv");
    assert_eq!(auc[1][0], "all");
    assert_eq!(auc[2][0], "large");
    assert!(auc[1][1].parse::<f64>().unwrap() > 0.5);

    ok(d, &["evidence", "--data", "sim", "--fit", "fit", "--draws", "2000", "--out", "ev"]);
    let ev = csv_rows(d, "ev/evidence.csv");
    assert_eq!(ev.len(), 2);
    assert_eq!(ev[1][5].parse::<f64>().unwrap(), 1.0);

    for (manifest, out) in [("sim/manifest.json", "sim_again"), ("fit/manifest.json", "fit_again"), ("ppc/manifest.json", "ppc_again")] {
        let r = outbreak(d, &["replay", "--manifest", manifest, "--out", out]);
        assert!(r.status.success(), "{manifest}: {}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(read(d, "fit/chain2.csv"), read(d, "fit_again/chain2.csv"));
}

#[test]
fn model_probabilities_sum_to_one() {
    let tmp = fitted();
    let d = tmp.path();
    std::fs::write(d.join("fit0.conf"), "variant=0\nn_chains=2\nn_iterations=1200\nn_warmup=600\n").unwrap();
    ok(d, &["fit", "--config", "fit0.conf", "--data", "sim", "--out", "fit0", "--rhat-gate", "100"]);
    ok(d, &["compare", "--data", "sim", "--fit", "fit", "--fit", "fit0", "--draws", "2000", "--out", "ev"]);
    let ev = csv_rows(d, "ev/evidence.csv");
    assert_eq!(ev.len(), 3);
    assert_eq!((ev[1][0].as_str(), ev[2][0].as_str()), ("I", "0"));
    let total: f64 = ev[1..].iter().map(|r| r[5].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("sim.conf"), "times=24\n").unwrap();
    ok(d, &["simulate", "--config", "sim.conf", "--out", "sim"]);

    std::fs::write(d.join("one.conf"), "variant=I\nn_chains=1\nn_iterations=200\nn_warmup=100\n").unwrap();
    let one = ok(d, &["fit", "--config", "one.conf", "--data", "sim", "--out", "one"]);
    assert!(String::from_utf8_lossy(&one.stderr).contains("gate skipped"));
    assert!(!d.join("one/rhat.csv").exists());

    std::fs::write(d.join("two.conf"), "variant=I\nn_chains=2\nn_iterations=200\nn_warmup=100\n").unwrap();
    let gated = outbreak(d, &["fit", "--config", "two.conf", "--data", "sim", "--out", "two", "--rhat-gate", "0.5"]);
    assert_eq!(gated.status.code(), Some(3));
    assert!(d.join("two/manifest.json").exists());

    std::fs::write(d.join("init.json"), "{\"trend\": [0.0]}").unwrap();
    let bad_init = outbreak(d, &["fit", "--config", "one.conf", "--data", "sim", "--out", "bad", "--init", "init.json"]);
    assert_eq!(bad_init.status.code(), Some(2));

    let missing = outbreak(d, &["fit", "--config", "one.conf", "--data", "nowhere", "--out", "bad"]);
    assert_eq!(missing.status.code(), Some(2));

    std::fs::write(d.join("bad.conf"), "variant=IX\n").unwrap();
    let bad_variant = outbreak(d, &["fit", "--config", "bad.conf", "--data", "sim", "--out", "bad"]);
    assert_eq!(bad_variant.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_variant.stderr).contains("unknown model variant"));
}

#[test]
fn replay_refuses_changed_inputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("sim.conf"), "times=24\n").unwrap();
    std::fs::write(d.join("fit.conf"), "variant=0\nn_chains=1\nn_iterations=200\nn_warmup=100\n").unwrap();
    ok(d, &["simulate", "--config", "sim.conf", "--out", "sim"]);
    ok(d, &["fit", "--config", "fit.conf", "--data", "sim", "--out", "fit"]);
    std::fs::write(d.join("sim/counts.csv"), read(d, "sim/counts.csv").replacen(",", ",1", 2)).unwrap();
    let r = outbreak(d, &["replay", "--manifest", "fit/manifest.json", "--out", "again"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("inputs changed"));
}
