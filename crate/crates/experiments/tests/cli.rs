use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use experiments::commands::{cmd_estimate, cmd_moment_check, cmd_tournament, Verdict};
use experiments::config::{self, ExperimentConfig, MomentCheckConfig, TournamentCmdConfig};
use experiments::overrides::Override;
use experiments::report::read_json;
use experiments::EstimationReport;
use serde_json::json;

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

fn small_estimate(seed: u64) -> ExperimentConfig {
    let o: Vec<Override> = [("n_psi", "5000"), ("n_moments", "5000"), ("sgd.T", "2000"), ("sgd.K", "3"), ("eval.symdiff_draws", "5000")]
        .iter()
        .map(|(p, v)| Override { path: p.to_string(), value: v.to_string() })
        .collect();
    config::load(&presets().join("fig1a.json"), &o, Some(seed)).unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_truncgauss")).args(args).output().unwrap()
}

fn write_config(dir: &Path, value: serde_json::Value) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, value.to_string()).unwrap();
    p
}

fn base_estimate() -> serde_json::Value {
    json!({
        "dimension": 1,
        "true_params": {"mean": [0.0], "covariance": [[1.0]]},
        "set": {"kind": "halfspace", "normal": [1.0], "offset": 0.0},
        "k": 2,
        "n_psi": 2000,
        "n_moments": 2000,
        "sgd": {"T": 500},
        "eval": {"symdiff_draws": 1000, "psi_error_draws": 1000}
    })
}

#[test]
fn report_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_estimate(&small_estimate(4), dir.path()).unwrap();
    let back: EstimationReport = read_json(&dir.path().join("report.json")).unwrap();
    assert_eq!(back, report);
    assert_eq!(report.degree_table.len(), report.k + 1);
    assert!(report.degree_table.iter().all(|r| r.l2_error.is_some()));
    let header = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(header.starts_with("k,run,iteration,objective,clamp_count\n"));
    assert_eq!(header.lines().count(), 1 + 3 * 100);
}

#[test]
fn stage_timings_cover_the_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let t = cmd_estimate(&small_estimate(5), dir.path()).unwrap().timings;
    let names: Vec<&str> = t.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["moments", "psi", "sgd", "recovery", "evaluation", "output"]);
    assert!(t.stage_sum() >= 0.95 * t.total_seconds && t.stage_sum() <= t.total_seconds * 1.0001, "{t:?}");
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), base_estimate());
    let out = dir.path().join("out");
    let cfg_s = cfg.to_str().unwrap();
    let out_s = out.to_str().unwrap();

    // no seed anywhere
    let o = run(&["estimate", "--config", cfg_s, "--out", out_s]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    // zero samples, rejected before anything is written
    let o = run(&["estimate", "--config", cfg_s, "--seed", "1", "--out", out_s, "--n_psi", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    // unknown field
    let o = run(&["estimate", "--config", cfg_s, "--seed", "1", "--out", out_s, "--sgd.iters", "5"]);
    assert_eq!(o.status.code(), Some(2));
    // bad flag
    let o = run(&["estimate", "--config", cfg_s, "--seed", "x"]);
    assert_eq!(o.status.code(), Some(2));
    // dimension above the lower-bound limit
    let o = run(&["lower-bound", "--config", presets().join("lower_bound.json").to_str().unwrap(), "--out", out_s, "--d", "15"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_estimate();
    cfg["set"]["offset"] = json!(9.0);
    let cfg = write_config(dir.path(), cfg);
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--seed", "1", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("set mass too low"));
}

#[test]
fn estimate_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), base_estimate());
    let out = dir.path().join("o");
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--seed", "2", "--out", out.to_str().unwrap(), "--sgd.K", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: EstimationReport = read_json(&out.join("report.json")).unwrap();
    assert_eq!(report.runs.len(), 3);
    assert_eq!(report.seed, 2);
    assert!(out.join("trace.csv").exists());
}

#[test]
fn fig1_and_recover_set_csv_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let f = presets().join("fig1a.json");
    let f = f.to_str().unwrap();
    let small = ["--n_psi", "3000", "--n_moments", "3000", "--sgd.T", "500", "--sgd.K", "1", "--eval.symdiff_draws", "2000"];
    let out = dir.path().join("fig1");
    let o = run(&[&["fig1", "--config", f, "--out", out.to_str().unwrap(), "--fig1.degrees", "[1,3]"], &small[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let points = std::fs::read_to_string(out.join("points.csv")).unwrap();
    assert!(points.starts_with("kind,k,x1,x2\n"));
    assert_eq!(points.lines().filter(|l| l.starts_with("mu_hat,")).count(), 2);
    assert!(points.lines().all(|l| l.split(',').count() == 4));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("k,mu_hat_1,mu_hat_2,mean_error"));
    assert_eq!(summary.lines().count(), 3);

    let out = dir.path().join("rs");
    let o = run(&[&["recover-set", "--config", f, "--out", out.to_str().unwrap(), "--grid.points_per_axis", "11"], &small[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let points = std::fs::read_to_string(out.join("points.csv")).unwrap();
    assert_eq!(points.lines().next(), Some("x1,x2,recovered,truth"));
    assert_eq!(points.lines().count(), 1 + 121);
}

#[test]
fn lower_bound_summary_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lb");
    let o = run(&[
        "lower-bound",
        "--config",
        presets().join("lower_bound.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--d",
        "4",
        "--sample_sizes",
        "[2,200]",
        "--trials",
        "20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("m,mean_error,error_se,mean_collisions,collision_rate,collision_rate_se,birthday_probability"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    // two draws over 16 cells
    assert!((rows[0][6] - 1.0 / 16.0).abs() < 1e-15);
    // 200 draws over 16 cells always collide
    assert_eq!(rows[1][4], 1.0);
    assert_eq!(std::fs::read_to_string(out.join("trials.csv")).unwrap().lines().count(), 1 + 40);
}

fn moment_cfg(k: usize, second_lo: f64, second_hi: f64) -> MomentCheckConfig {
    serde_json::from_value(json!({
        "first": {"params": {"mean": [0.0], "covariance": [[1.0]]}, "set": {"kind": "axis_box", "lo": [0.0], "hi": [1.0]}},
        "second": {"params": {"mean": [0.0], "covariance": [[1.0]]}, "set": {"kind": "axis_box", "lo": [second_lo], "hi": [second_hi]}},
        "k": k,
        "n": 50000,
        "tv_draws": 10000,
        "seed": 3
    }))
    .unwrap()
}

#[test]
fn moment_check_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let same = cmd_moment_check(&moment_cfg(4, 0.0, 1.0), dir.path()).unwrap();
    assert_eq!(same.verdict, Verdict::Same);
    assert!(same.distance <= 3.0 * same.noise);
    assert!(same.tv.value < 0.05);

    let diff = cmd_moment_check(&moment_cfg(1, -1.0, 0.0), dir.path()).unwrap();
    assert_eq!(diff.verdict, Verdict::Different);
    // E[x | x ∈ [0, 1]] for N(0, 1) is (φ(0) − φ(1))/(Φ(1) − ½)
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let m1 = (phi(0.0) - phi(1.0)) / (truncgauss::stats::normal_cdf(1.0) - 0.5);
    assert!((diff.distance - 2.0 * m1).abs() < 4.0 * diff.noise, "{} vs {}", diff.distance, 2.0 * m1);
    assert!(diff.tv.value > 0.99);

    let zero = cmd_moment_check(&moment_cfg(0, -1.0, 0.0), dir.path()).unwrap();
    assert_eq!(zero.distance, 0.0);
    assert_eq!(zero.verdict, Verdict::Inconclusive);
}

#[test]
fn tournament_with_one_matching_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({"params": {"mean": [0.0], "covariance": [[1.0]]}, "set": {"kind": "halfspace", "normal": [1.0], "offset": 0.0}});
    let cfg: TournamentCmdConfig = serde_json::from_value(json!({
        "data": spec, "n_data": 500, "hypotheses": [spec], "eps": 0.2, "delta": 0.1, "tv_draws": 2000, "seed": 1
    }))
    .unwrap();
    let r = cmd_tournament(&cfg, dir.path()).unwrap();
    assert_eq!(r.winner, Some(0));
    assert_eq!(r.wins, vec![vec![0.0]]);
    assert!(r.winner_tv.unwrap().value < 0.05);
    // the exact half-line mass is filled in
    assert_eq!(r.hypotheses[0].alpha, Some(0.5));
}

#[test]
fn tournament_records_all_matches_for_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = run(&[
        "tournament",
        "--config",
        presets().join("tournament.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n_data",
        "3000",
        "--eps",
        "0.25",
        "--grid.step",
        "1.0",
        "--grid.variances",
        "[1.0]",
        "--grid.mass_draws",
        "2000",
        "--tv_draws",
        "2000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let n = v["hypotheses"].as_array().unwrap().len();
    assert_eq!(n, 9);
    assert_eq!(v["wins"].as_array().unwrap().len(), n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (v["wins"][i][j].as_f64().unwrap(), v["wins"][j][i].as_f64().unwrap());
            if i != j {
                assert_eq!(a + b, 1.0);
            }
        }
    }
}
