//! End-to-end tests of the `cb` binary: output schemas, exit-status
//! discipline, and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use counter_braids::de_uncoupled::{bp_threshold_eps, ExitCurve};
use counter_braids::ensemble::{g_eval, EnsembleParams};

fn cb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cb")).args(args).output().expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = cb(args);
    assert!(out.status.success(), "cb {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn wide_row(csv: &str) -> Vec<String> {
    let line = csv
        .lines()
        .find(|l| !l.starts_with('#') && !l.starts_with("k,"))
        .expect("data row present");
    line.split(',').map(str::to_string).collect()
}

#[test]
fn threshold_bp_matches_library() {
    let csv = stdout_of(&[
        "threshold", "--k", "3", "--beta", "0.5", "--which", "bp", "--tol-uncoupled", "1e-4",
    ]);
    assert!(csv.starts_with("# manifest="));
    let row = wide_row(&csv);
    let eps_bp: f64 = row[4].parse().unwrap();
    let expected = bp_threshold_eps(3, 6.0, 1e-4).unwrap();
    assert_eq!(eps_bp, expected, "CLI must reproduce the library bisection exactly");
}

#[test]
fn threshold_area_and_potential_agree() {
    let csv = stdout_of(&[
        "threshold", "--k", "3", "--beta", "0.5", "--which", "area,potential", "--tol-uncoupled",
        "1e-5",
    ]);
    let row = wide_row(&csv);
    let area: f64 = row[6].parse().unwrap();
    let potential: f64 = row[7].parse().unwrap();
    assert!((area - potential).abs() < 1e-4, "area {area} vs potential {potential}");
}

#[test]
fn threshold_json_format() {
    let json = stdout_of(&[
        "threshold", "--k", "3", "--beta", "0.5", "--which", "bp", "--tol-uncoupled", "1e-3",
        "--format", "json",
    ]);
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(value["manifest_hash"].is_string());
    assert!(value["report"]["eps_bp"].is_number());
}

#[test]
fn missing_required_flag_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("never.csv");
    let out = cb(&["threshold", "--beta", "0.5", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists(), "no output file may be written on usage errors");
}

#[test]
fn ebp_curve_rows_satisfy_fixed_point_identity() {
    let csv = stdout_of(&["curves", "--kind", "ebp", "--k", "3", "--beta", "0.5", "--samples", "200"]);
    let curve = ExitCurve::from_csv(&csv).unwrap();
    assert_eq!(curve.samples.len(), 200);
    let params = EnsembleParams::new(3, 6.0, 0.0, 0).unwrap();
    for s in &curve.samples {
        let g = g_eval(s.param, &params).unwrap();
        let back = s.eps * g.powi(2);
        assert!((back - s.param).abs() <= 1e-12, "x={} plug-back {back}", s.param);
    }
}

#[test]
fn residual_curve_below_threshold_is_header_only() {
    let csv = stdout_of(&[
        "curves", "--kind", "residual", "--k", "3", "--beta", "0.5", "--eps", "0.05",
    ]);
    assert!(csv.contains("area=0"));
    let data_rows = csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with("param")).count();
    assert_eq!(data_rows, 0);
    // residual without --eps is a usage error
    let out = cb(&["curves", "--kind", "residual", "--k", "3", "--beta", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_byte_identical_and_recovers_at_eps_zero() {
    let args = [
        "simulate", "--m0", "400", "--beta", "0.8", "--k", "3", "--eps", "0", "--trials", "5",
        "--seed", "9",
    ];
    let first = stdout_of(&args);
    let second = stdout_of(&args);
    assert_eq!(first, second, "identical config+seed must be byte-identical");
    assert!(first.contains("recovery_rate=1"));
}

#[test]
fn fig2_smoke_grid_and_degenerate_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gaps.csv");
    let status = cb(&[
        "fig2", "--k-list", "3", "--beta-min", "0.5", "--beta-max", "0.5", "--beta-step", "0.1",
        "--n", "16", "--w", "2", "--tol-uncoupled", "1e-4", "--tol-coupled", "1e-3",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let wide = std::fs::read_to_string(&out).unwrap();
    let row = wide_row(&wide);
    let gap_uncoupled: f64 = row[9].parse().unwrap();
    let gap_coupled: f64 = row[10].parse().unwrap();
    assert!(gap_uncoupled >= -1e-4);
    assert!(gap_coupled <= gap_uncoupled + 1e-4);
    assert!(Path::new(&dir.path().join("gaps.long.csv")).exists());
    assert!(Path::new(&dir.path().join("gaps.manifest.json")).exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gaps.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["rows"], 1);
    assert_eq!(manifest["rows_with_errors"], 0);

    // (N, w) = (1, 1) degenerates: coupled gap column equals the uncoupled one.
    let out11 = dir.path().join("gaps11.csv");
    let status = cb(&[
        "fig2", "--k-list", "3", "--beta-min", "0.5", "--beta-max", "0.5", "--beta-step", "0.1",
        "--n", "1", "--w", "1", "--tol-uncoupled", "1e-4", "--out", out11.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let row = wide_row(&std::fs::read_to_string(&out11).unwrap());
    assert_eq!(row[9], row[10], "degenerate run must copy the uncoupled gap");
}

#[test]
fn graph_build_info_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("braid.cb");
    stdout_of(&[
        "graph", "build", "--m0", "50", "--m1", "40", "--k", "3", "--seed", "5", "--out",
        path.to_str().unwrap(),
    ]);
    let info = stdout_of(&["graph", "info", "--input", path.to_str().unwrap()]);
    assert!(info.contains("layers: 1"));
    assert!(info.contains("flows: 50"));
    assert!(info.contains("edges=150"));

    let coupled = dir.path().join("coupled.cb");
    stdout_of(&[
        "graph", "build", "--m0", "40", "--m1", "20", "--k", "3", "--seed", "5", "--coupled-n",
        "4", "--coupled-w", "2", "--out", coupled.to_str().unwrap(),
    ]);
    let info = stdout_of(&["graph", "info", "--input", coupled.to_str().unwrap()]);
    assert!(info.contains("coupled: N=4 w=2 kappa=10"), "{info}");
}
