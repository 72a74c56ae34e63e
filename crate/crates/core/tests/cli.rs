use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uqgroup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqgroup"))
        .args(args)
        .output()
        .expect("spawn uqgroup")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn budget_exhausted_exits_2_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem":"analytic_g1","N":2,"S":8,"n_max":150}"#,
    );
    let out = dir.path().join("out");
    let o = uqgroup(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("budget_exhausted"));
    for f in [
        "levels.csv",
        "summary.csv",
        "report.json",
        "grid.json",
        "iterations_level1.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("strategy,S,R,pred_speedup"));
    let tags: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(tags, ["nat", "sur", "its"]);
    let levels = fs::read_to_string(out.join("levels.csv")).unwrap();
    assert!(levels.starts_with("strategy,S,level,n_samples,n_ensembles,R_l\n"));
    let iters = fs::read_to_string(out.join("iterations_level2.csv")).unwrap();
    assert!(iters.starts_with("sample_id,I,I_hat\n"));
}

#[test]
fn tolerance_met_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem":"analytic_g1","N":2,"S":4,"n_max":5000}"#,
    );
    let out = dir.path().join("out");
    let o = uqgroup(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--tau",
        "0.05",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("tolerance_met"));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem":"analytic_g2","N":2,"S":8,"n_max":100}"#,
    );
    let out = dir.path().join("out");
    let o = uqgroup(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--strategies",
        "its,nat",
        "--S",
        "4,6",
        "--n-max",
        "60",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<String> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(rows, ["its,4", "its,6", "nat,4", "nat,6"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["n_max"], 60);
    assert_eq!(report["executed_ensemble_size"], 4);
}

#[test]
fn table_prints_saved_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem":"analytic_g1","N":2,"S":[8,16],"n_max":100}"#,
    );
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    uqgroup(&["run", "--config", &cfg, "--out-dir", out_s]);
    let o = uqgroup(&["table", "--out-dir", out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("strategy"));
    assert!(header.contains("R_1") && header.contains("pred"));
    assert_eq!(text.lines().filter(|l| l.starts_with("sur")).count(), 2);
}

#[test]
fn pde_run_with_base_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem":"pde_test1","N":2,"S":[4,8],"n_max":30,
            "mesh":{"mesh_cells":4},"field":{"nystrom_points":129}}"#,
    );
    let curve = write(dir.path(), "curve.csv", "S,speedup\n1,1.0\n4,2.0\n8,3.0\n");
    let out = dir.path().join("out");
    let o = uqgroup(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--base-curve",
        &curve,
        "--residual-history",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    for row in summary.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let (s, r, pred): (f64, f64, f64) = (
            cols[1].parse().unwrap(),
            cols[2].parse().unwrap(),
            cols[3].parse().unwrap(),
        );
        let base = if s == 4.0 { 2.0 } else { 3.0 };
        assert!((pred - base / r).abs() < 1e-9, "{row}");
    }
    assert!(out.join("residuals_level1_ens0.csv").exists());
}

#[test]
fn errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("out");
    let out_s = out.to_str().unwrap();

    let missing = d.join("nope.json");
    let o = uqgroup(&[
        "run",
        "--config",
        missing.to_str().unwrap(),
        "--out-dir",
        out_s,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"));

    let bad = write(
        d,
        "bad.json",
        r#"{"problem":"analytic_g1","N":2,"S":4,"n_max":50,"bogus":1}"#,
    );
    assert_eq!(
        uqgroup(&["run", "--config", &bad, "--out-dir", out_s])
            .status
            .code(),
        Some(1)
    );

    let cfg = write(
        d,
        "c.json",
        r#"{"problem":"analytic_g1","N":2,"S":4,"n_max":50}"#,
    );
    let o = uqgroup(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        out_s,
        "--strategies",
        "nat,fast",
    ]);
    assert_ne!(o.status.code(), Some(0));

    let o = uqgroup(&["table", "--out-dir", d.join("empty").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_solve_exits_1_with_partial_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem":"pde_test1","N":2,"S":4,"n_max":40,
            "mesh":{"mesh_cells":4},"field":{"sigma0":1000.0,"nystrom_points":129}}"#,
    );
    let out = dir.path().join("out");
    let o = uqgroup(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stop_reason"], "aborted");
    assert!(report["failure"].is_string());
}
