//! The experiment commands. Each is a pure function of its config and seed;
//! only the `timings` fields of the reports vary between runs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use truncgauss::gaussian::{self, standard_log_density, tv_monte_carlo, TruncatedGaussian};
use truncgauss::identifiability::{self, empirical_moments, moment_distance, moment_noise, Hypothesis, TournamentConfig};
use truncgauss::lower_bound::{birthday_probability, run_trial, LowerBoundTrial};
use truncgauss::optimizer::{SgdOutput, WeightedBatch};
use truncgauss::pipeline::{moment_stage, psi_stage, run_pipeline, sgd_stage, stage, MomentStage};
use truncgauss::recovery::symdiff_mass;
use truncgauss::rng::{substream, SeedTree};
use truncgauss::sets::SetOracle;
use truncgauss::stats::Welford;
use truncgauss::{HermiteExpansion, McEstimate, SampleBatch};

use crate::config::{ExperimentConfig, LowerBoundConfig, MomentCheckConfig, TournamentCmdConfig, TruncatedSpec};
use crate::error::{CliError, CliResult, StageExt};
use crate::report::*;

/// Experiment-level stream stages, above the pipeline's.
mod streams {
    pub const LOWER_BOUND: u32 = 10;
    pub const MOMENT_CHECK: u32 = 11;
    pub const TOURNAMENT: u32 = 12;
}

/// Rows of the stage-2 batch used for objective traces.
const TRACE_ROWS: usize = 20_000;
/// Largest grid written by `recover-set`.
const MAX_GRID_POINTS: usize = 1_000_000;

fn truncated(spec: &TruncatedSpec) -> truncgauss::Result<TruncatedGaussian<SetOracle>> {
    let tg = TruncatedGaussian::new(spec.params.clone(), spec.set.clone())?;
    match spec.alpha {
        Some(a) => tg.with_alpha(a),
        None => Ok(tg),
    }
}

/// Exact mass if the set admits one, else the configured value, else Monte
/// Carlo.
fn true_mass(spec: &TruncatedSpec, rng: &mut impl rand::Rng, n: usize) -> truncgauss::Result<f64> {
    if let Some(a) = spec.set.exact_mass(&spec.params).or(spec.alpha) {
        return Ok(a);
    }
    Ok(gaussian::mass_estimate(&spec.params, &spec.set, rng, n)?.value)
}

fn trace_batch(batch: &SampleBatch, psi_k: &HermiteExpansion, enabled: bool) -> truncgauss::Result<Option<WeightedBatch>> {
    if !enabled {
        return Ok(None);
    }
    let rows = batch.len().min(TRACE_ROWS);
    let sub = SampleBatch::from_flat(batch.dim(), batch.as_flat()[..rows * batch.dim()].to_vec())?;
    Ok(Some(WeightedBatch::new(sub, psi_k)?))
}

/// Coefficient energy per degree and, with `draws > 0`, the error of each
/// truncation against the true `ψ` in working coordinates.
fn degree_table(
    psi_k: &HermiteExpansion,
    moments: &MomentStage,
    truth: &TruncatedSpec,
    alpha_star: f64,
    draws: usize,
    rng: &mut impl rand::Rng,
) -> truncgauss::Result<Vec<DegreeRow>> {
    let k = psi_k.max_degree();
    let mut energy = vec![0.0; k + 1];
    for (v, c) in psi_k.basis().indices().zip(psi_k.coeffs()) {
        energy[v.iter().sum::<u32>() as usize] += c * c;
    }
    let mut errors: Vec<Option<McEstimate>> = vec![None; k + 1];
    if draws > 0 {
        let d = psi_k.dim();
        let working = moments.map.push_forward(&truth.params)?;
        let truncs: Vec<HermiteExpansion> = (0..=k).map(|j| psi_k.truncate(j)).collect::<truncgauss::Result<_>>()?;
        let mut evals: Vec<_> = truncs.iter().map(|t| t.evaluator()).collect();
        let mut acc = vec![Welford::new(); k + 1];
        let std = truncgauss::GaussianParams::standard(d);
        let (mut y, mut x) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..draws {
            std.sample_into(rng, &mut y);
            moments.map.apply_inverse(&y, &mut x);
            let psi = if truth.set.contains(&x)? { (working.log_density(&y)? - standard_log_density(&y)).exp() / alpha_star } else { 0.0 };
            for (e, w) in evals.iter_mut().zip(acc.iter_mut()) {
                let r = e.eval_clamped(&y) - psi;
                w.push(r * r);
            }
        }
        errors = acc.iter().map(|w| Some(w.estimate())).collect();
    }
    let mut cumulative = 0.0;
    Ok(energy
        .into_iter()
        .zip(errors)
        .enumerate()
        .map(|(degree, (energy, l2_error))| {
            cumulative += energy;
            DegreeRow { degree, energy, cumulative_energy: cumulative, l2_error }
        })
        .collect())
}

/// `k,run,iteration,objective,clamp_count` rows for each degree's runs.
fn write_traces(path: &Path, groups: &[(usize, Vec<SgdOutput>)]) -> CliResult<()> {
    let mut w = CsvWriter::create(path, &["k", "run", "iteration", "objective", "clamp_count"])?;
    for (k, runs) in groups {
        for (r, run) in runs.iter().enumerate() {
            for p in &run.trace {
                w.row(&[k.to_string(), r.to_string(), p.iteration.to_string(), num(p.objective), p.clamp_count.to_string()])?;
            }
        }
    }
    w.finish()
}

/// Runs the full pipeline on samples from the configured truth and writes
/// `report.json` and `trace.csv` to `out`.
pub fn cmd_estimate(cfg: &ExperimentConfig, out: &Path) -> CliResult<EstimationReport> {
    let seed = cfg.validate()?;
    let mut sw = Stopwatch::start();
    let truth = cfg.truth();
    let tg = truncated(&truth).stage("setup")?;
    let result = run_pipeline(&tg, &cfg.pipeline(), seed).map_err(|e| CliError::Stage { stage: "pipeline", source: e })?;
    sw.adopt(&result.timings);

    let mut rng = substream(seed, stage::EVAL, 0);
    let symdiff = symdiff_mass(&result.recovered, &cfg.set, &cfg.true_params, &mut rng, cfg.eval.symdiff_draws).stage("evaluation")?;
    let mut rng = substream(seed, stage::EVAL, 1);
    let alpha_star = true_mass(&truth, &mut rng, cfg.eval.psi_error_draws.max(10_000)).stage("evaluation")?;
    let table = degree_table(&result.psi_k, &result.moments, &truth, alpha_star, cfg.eval.psi_error_draws, &mut rng).stage("evaluation")?;
    sw.lap("evaluation");

    let dir = ensure_dir(out)?;
    let trace_file = if cfg.trace {
        write_traces(&dir.join("trace.csv"), &[(cfg.k, result.runs.clone())])?;
        Some("trace.csv".to_string())
    } else {
        None
    };
    let p = &result.params;
    let mut report = EstimationReport {
        seed,
        k: cfg.k,
        mu_hat: vec_of(p.mean()),
        sigma_hat: rows_of(p.covariance()),
        alpha_hat: result.moments.alpha_hat,
        mu_s: vec_of(&result.moments.mu_s),
        sigma_s: rows_of(&result.moments.sigma_s),
        mean_error: (p.mean() - cfg.true_params.mean()).norm(),
        covariance_error: (p.covariance() - cfg.true_params.covariance()).norm(),
        lambda: result.lambda,
        projection_a: result.projection.a,
        projection_b: result.projection.b,
        medoid: result.medoid,
        runs: result
            .runs
            .iter()
            .map(|r| {
                let q = result.moments.map.pull_back(&r.params)?;
                Ok(RunSummary { mu_hat: vec_of(q.mean()), sigma_hat: rows_of(q.covariance()), clamp_count: r.clamp_count })
            })
            .collect::<truncgauss::Result<_>>()
            .stage("recovery")?,
        degree_table: table,
        trace_file,
        symdiff_mass: symdiff,
        timings: Timings::default(),
    };
    report.timings = sw.finish("output");
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Entry {
    pub k: usize,
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Report {
    pub seed: u64,
    pub mu_star: Vec<f64>,
    pub mu_s: Vec<f64>,
    pub alpha_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<String>,
    pub entries: Vec<Fig1Entry>,
    pub timings: Timings,
}

/// Estimates `μ` at each configured Hermite degree from one shared pair of
/// sample batches, and writes the point cloud for plotting.
pub fn cmd_fig1(cfg: &ExperimentConfig, out: &Path) -> CliResult<Fig1Report> {
    let seed = cfg.validate()?;
    if cfg.dimension != 2 {
        return Err(CliError::config("fig1 needs dimension 2"));
    }
    let degrees = &cfg.fig1.degrees;
    if degrees.is_empty() {
        return Err(CliError::config("fig1.degrees must not be empty"));
    }
    let k_max = *degrees.iter().max().expect("non-empty");
    let mut sw = Stopwatch::start();
    let tg = truncated(&cfg.truth()).stage("setup")?;
    let seeds = SeedTree::new(seed);
    let moments = moment_stage(&tg, cfg.n_moments, cfg.whitening, &seeds).stage("moments")?;
    sw.lap("moments");
    let (psi_max, batch) = psi_stage(&tg, &moments, cfg.n_psi, k_max, &seeds).stage("psi")?;
    sw.lap("psi");

    let mut entries = Vec::with_capacity(degrees.len());
    let dir = ensure_dir(out)?;
    let mut all_runs = Vec::new();
    for &k in degrees {
        let psi_k = psi_max.truncate(k).stage("psi")?;
        let tb = trace_batch(&batch, &psi_k, cfg.trace).stage("psi")?;
        let (runs, medoid, _, _) = sgd_stage(&tg, &moments, &psi_k, tb.as_ref(), &cfg.sgd, &seeds).stage("sgd")?;
        let p = moments.map.pull_back(&runs[medoid].params).stage("sgd")?;
        entries.push(Fig1Entry {
            k,
            mu_hat: vec_of(p.mean()),
            sigma_hat: rows_of(p.covariance()),
            mean_error: (p.mean() - cfg.true_params.mean()).norm(),
        });
        all_runs.push((k, runs));
    }
    sw.lap("sgd");

    // the stage-1 sample, regenerated from its stream
    let shown = gaussian::truncated_sample(
        &tg,
        &mut seeds.stage(stage::MOMENTS).stream(0),
        cfg.fig1.points.min(cfg.n_moments),
        gaussian::default_max_attempts(tg.alpha_hat().unwrap_or(1e-3)),
    )
    .stage("output")?;
    let mut w = CsvWriter::create(&dir.join("points.csv"), &["kind", "k", "x1", "x2"])?;
    for x in shown.batch.rows() {
        w.row(&["sample".into(), String::new(), num(x[0]), num(x[1])])?;
    }
    let mu_star = cfg.true_params.mean();
    w.row(&["mu_star".into(), String::new(), num(mu_star[0]), num(mu_star[1])])?;
    w.row(&["mu_s".into(), String::new(), num(moments.mu_s[0]), num(moments.mu_s[1])])?;
    for e in &entries {
        w.row(&["mu_hat".into(), e.k.to_string(), num(e.mu_hat[0]), num(e.mu_hat[1])])?;
    }
    w.finish()?;
    let mut s = CsvWriter::create(&dir.join("summary.csv"), &["k", "mu_hat_1", "mu_hat_2", "mean_error"])?;
    for e in &entries {
        s.row(&[e.k.to_string(), num(e.mu_hat[0]), num(e.mu_hat[1]), num(e.mean_error)])?;
    }
    s.finish()?;
    if cfg.trace {
        write_traces(&dir.join("trace.csv"), &all_runs)?;
    }
    let mut report = Fig1Report {
        seed,
        mu_star: vec_of(mu_star),
        mu_s: vec_of(&moments.mu_s),
        alpha_hat: moments.alpha_hat,
        calibration: cfg.fig1.calibration.clone(),
        entries,
        timings: Timings::default(),
    };
    report.timings = sw.finish("output");
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub m: usize,
    pub mean_error: f64,
    pub error_se: f64,
    pub mean_collisions: f64,
    /// Fraction of trials with at least one shared cell.
    pub collision_rate: f64,
    pub collision_rate_se: f64,
    /// The same fraction for `m` uniform draws over `2^d` cells.
    pub birthday_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub seed: u64,
    pub d: usize,
    pub trials: usize,
    pub rows: Vec<LowerBoundRow>,
    pub timings: Timings,
}

/// Runs `trials` independent trials for each sample size, concurrently.
pub fn lower_bound_trials(d: usize, m: usize, trials: usize, seed: u64, size_index: usize) -> truncgauss::Result<Vec<LowerBoundTrial>> {
    let seeds = SeedTree::new(seed).stage(streams::LOWER_BOUND + size_index as u32);
    (0..trials).into_par_iter().map(|t| run_trial(d, m, &mut seeds.stream(t as u64))).collect()
}

fn summarize(m: usize, d: usize, trials: &[LowerBoundTrial]) -> LowerBoundRow {
    let errors: Welford = trials.iter().map(|t| t.error).collect();
    let hit: Welford = trials.iter().map(|t| if t.collisions > 0 { 1.0 } else { 0.0 }).collect();
    let mean_collisions = trials.iter().map(|t| t.collisions as f64).sum::<f64>() / trials.len() as f64;
    LowerBoundRow {
        m,
        mean_error: errors.mean(),
        error_se: errors.estimate().std_error,
        mean_collisions,
        collision_rate: hit.mean(),
        collision_rate_se: hit.estimate().std_error,
        birthday_probability: birthday_probability(m, 1usize << d),
    }
}

/// Mean-estimation error and cell collisions on the lower-bound family.
pub fn cmd_lower_bound(cfg: &LowerBoundConfig, out: &Path) -> CliResult<LowerBoundReport> {
    let seed = cfg.validate()?;
    let mut sw = Stopwatch::start();
    let mut all = Vec::new();
    for (i, &m) in cfg.sample_sizes.iter().enumerate() {
        all.push((m, lower_bound_trials(cfg.d, m, cfg.trials, seed, i).stage("trials")?));
    }
    sw.lap("trials");
    let rows: Vec<LowerBoundRow> = all.iter().map(|(m, t)| summarize(*m, cfg.d, t)).collect();
    let dir = ensure_dir(out)?;
    let mut w = CsvWriter::create(
        &dir.join("summary.csv"),
        &["m", "mean_error", "error_se", "mean_collisions", "collision_rate", "collision_rate_se", "birthday_probability"],
    )?;
    for r in &rows {
        w.row(&[
            r.m.to_string(),
            num(r.mean_error),
            num(r.error_se),
            num(r.mean_collisions),
            num(r.collision_rate),
            num(r.collision_rate_se),
            num(r.birthday_probability),
        ])?;
    }
    w.finish()?;
    let mut w = CsvWriter::create(&dir.join("trials.csv"), &["m", "trial", "sign", "error", "collisions", "delta"])?;
    for (m, trials) in &all {
        for (t, tr) in trials.iter().enumerate() {
            w.row(&[m.to_string(), t.to_string(), num(tr.sign), num(tr.error), tr.collisions.to_string(), num(tr.delta)])?;
        }
    }
    w.finish()?;
    let mut report = LowerBoundReport { seed, d: cfg.d, trials: cfg.trials, rows, timings: Timings::default() };
    report.timings = sw.finish("output");
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Same,
    Different,
    Inconclusive,
}

/// `k = 0` compares only `m₀ ≡ 1` and says nothing. Otherwise distances
/// inside three noise units read as "same", distances beyond both the noise
/// band and `threshold` as "different".
pub fn verdict(k: usize, distance: f64, noise: f64, threshold: f64) -> Verdict {
    if k == 0 {
        Verdict::Inconclusive
    } else if distance <= 3.0 * noise {
        Verdict::Same
    } else if distance >= threshold {
        Verdict::Different
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheckReport {
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub distance: f64,
    /// Largest combined standard error over the compared moments.
    pub noise: f64,
    pub threshold: f64,
    pub tv: McEstimate,
    pub verdict: Verdict,
    pub timings: Timings,
}

pub fn cmd_moment_check(cfg: &MomentCheckConfig, out: &Path) -> CliResult<MomentCheckReport> {
    let seed = cfg.validate()?;
    let mut sw = Stopwatch::start();
    let seeds = SeedTree::new(seed).stage(streams::MOMENT_CHECK);
    let a = truncated(&cfg.first).stage("setup")?;
    let b = truncated(&cfg.second).stage("setup")?;
    let draw = |tg: &TruncatedGaussian<SetOracle>, i: u64| -> truncgauss::Result<SampleBatch> {
        let budget = gaussian::default_max_attempts(tg.alpha_hat().unwrap_or(1e-3));
        Ok(gaussian::truncated_sample(tg, &mut seeds.stream(i), cfg.n, budget)?.batch)
    };
    let ma = empirical_moments(&draw(&a, 0).stage("sampling")?, cfg.k).stage("moments")?;
    let mb = empirical_moments(&draw(&b, 1).stage("sampling")?, cfg.k).stage("moments")?;
    sw.lap("moments");
    let distance = moment_distance(&ma, &mb).stage("moments")?;
    let noise = moment_noise(&ma, &mb).stage("moments")?;
    let tv = tv_monte_carlo(&a, &b, &mut seeds.stream(2), cfg.tv_draws).stage("tv")?;
    sw.lap("tv");
    let dir = ensure_dir(out)?;
    let mut report = MomentCheckReport {
        seed,
        k: cfg.k,
        n: cfg.n,
        distance,
        noise,
        threshold: cfg.threshold,
        tv,
        verdict: verdict(cfg.k, distance, noise, cfg.threshold),
        timings: Timings::default(),
    };
    report.timings = sw.finish("output");
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverSetReport {
    pub seed: u64,
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub symdiff_mass: McEstimate,
    pub grid_points: usize,
    /// Fraction of grid points labelled differently from the truth.
    pub grid_disagreement: f64,
    pub timings: Timings,
}

/// Runs the pipeline, then labels a regular grid with the recovered and the
/// true set.
pub fn cmd_recover_set(cfg: &ExperimentConfig, out: &Path) -> CliResult<RecoverSetReport> {
    let seed = cfg.validate()?;
    let d = cfg.dimension;
    let g = &cfg.grid;
    if d > 2 {
        return Err(CliError::config("recover-set writes a grid and supports d = 1 or 2"));
    }
    if !(g.radius > 0.0) || g.points_per_axis < 2 {
        return Err(CliError::config("grid needs radius > 0 and at least 2 points per axis"));
    }
    let total = g.points_per_axis.checked_pow(d as u32).filter(|&t| t <= MAX_GRID_POINTS);
    let Some(total) = total else {
        return Err(CliError::config(format!("grid exceeds {MAX_GRID_POINTS} points")));
    };
    let mut sw = Stopwatch::start();
    let tg = truncated(&cfg.truth()).stage("setup")?;
    let result = run_pipeline(&tg, &cfg.pipeline(), seed).map_err(|e| CliError::Stage { stage: "pipeline", source: e })?;
    sw.adopt(&result.timings);
    let symdiff = symdiff_mass(&result.recovered, &cfg.set, &cfg.true_params, &mut substream(seed, stage::EVAL, 0), cfg.eval.symdiff_draws)
        .stage("evaluation")?;
    sw.lap("evaluation");

    let dir = ensure_dir(out)?;
    let axis: Vec<f64> = (0..g.points_per_axis).map(|i| -g.radius + 2.0 * g.radius * i as f64 / (g.points_per_axis - 1) as f64).collect();
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["recovered".into(), "truth".into()]).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvWriter::create(&dir.join("points.csv"), &header)?;
    let mut disagree = 0usize;
    let mut x = vec![0.0; d];
    for idx in 0..total {
        let mut rem = idx;
        for xi in x.iter_mut() {
            *xi = axis[rem % g.points_per_axis];
            rem /= g.points_per_axis;
        }
        let r = result.recovered.classify(&x).stage("evaluation")?;
        let t = cfg.set.contains(&x).stage("evaluation")?;
        disagree += (r != t) as usize;
        let mut row: Vec<String> = x.iter().map(|&v| num(v)).collect();
        row.push((r as u8).to_string());
        row.push((t as u8).to_string());
        w.row(&row)?;
    }
    w.finish()?;
    let p = &result.params;
    let mut report = RecoverSetReport {
        seed,
        mu_hat: vec_of(p.mean()),
        sigma_hat: rows_of(p.covariance()),
        symdiff_mass: symdiff,
        grid_points: total,
        grid_disagreement: disagree as f64 / total as f64,
        timings: Timings::default(),
    };
    report.timings = sw.finish("output");
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentCmdReport {
    pub seed: u64,
    pub hypotheses: Vec<TruncatedSpec>,
    pub wins: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    /// `None` records a failure: nobody won half its matches.
    pub winner: Option<usize>,
    pub draws_per_hypothesis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner_tv: Option<McEstimate>,
    pub timings: Timings,
}

/// Builds the hypothesis list, runs the Scheffé tournament on fresh data
/// and, when asked, measures the winner's distance to the data law.
pub fn cmd_tournament(cfg: &TournamentCmdConfig, out: &Path) -> CliResult<TournamentCmdReport> {
    let seed = cfg.validate()?;
    let mut sw = Stopwatch::start();
    let seeds = SeedTree::new(seed).stage(streams::TOURNAMENT);
    let truth = truncated(&cfg.data).stage("setup")?;
    let budget = gaussian::default_max_attempts(truth.alpha_hat().unwrap_or(1e-3));
    let data = gaussian::truncated_sample(&truth, &mut seeds.stream(0), cfg.n_data, budget).stage("sampling")?.batch;

    let mut mass_rng = seeds.stream(1);
    let mut hyps = Vec::new();
    for h in &cfg.hypotheses {
        let alpha = match h.alpha {
            Some(a) => a,
            None => true_mass(h, &mut mass_rng, cfg.mass_draws).stage("hypotheses")?,
        };
        hyps.push(Hypothesis::new(h.params.clone(), h.set.clone(), alpha).stage("hypotheses")?);
    }
    if let Some(g) = &cfg.grid {
        let sets = if g.sets.is_empty() {
            vec![identifiability::erm_min_mass_box(&data, &truth.params).stage("hypotheses")?]
        } else {
            g.sets.clone()
        };
        let grid = identifiability::grid_hypotheses(data.dim(), g.radius, g.step, &g.variances, &sets, &mut mass_rng, g.mass_draws)
            .stage("hypotheses")?;
        hyps.extend(grid);
    }
    sw.lap("hypotheses");

    let tcfg = TournamentConfig { eps: cfg.eps, delta: cfg.delta, c_t: cfg.c_t };
    let rep = identifiability::tournament(&data, &hyps, &tcfg, &mut seeds.stream(2)).stage("tournament")?;
    sw.lap("tournament");
    let winner_tv = match rep.winner {
        Some(w) if cfg.tv_draws > 0 => {
            let h = hyps[w].truncated().stage("evaluation")?;
            Some(tv_monte_carlo(&h, &truth, &mut seeds.stream(3), cfg.tv_draws).stage("evaluation")?)
        }
        _ => None,
    };
    sw.lap("evaluation");
    let dir = ensure_dir(out)?;
    let mut report = TournamentCmdReport {
        seed,
        hypotheses: hyps.iter().map(|h| TruncatedSpec { params: h.params.clone(), set: h.set.clone(), alpha: Some(h.alpha_hat) }).collect(),
        wins: rep.wins,
        scores: rep.scores,
        winner: rep.winner,
        draws_per_hypothesis: rep.draws_per_hypothesis,
        winner_tv,
        timings: Timings::default(),
    };
    report.timings = sw.finish("output");
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}
