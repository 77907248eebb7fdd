//! The three-stage estimator: conditional moments and whitening, Hermite
//! coefficients of `ψ`, projected SGD with median-of-runs, then set recovery.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{Error, Result};
use crate::gaussian::{self, conditional_moments, whitening_transform, AffineMap, GaussianParams, TruncatedGaussian};
use crate::hermite::HermiteExpansion;
use crate::optimizer::{run_repetitions, ObjectiveContext, ProjectionSet, RejectionSource, SgdConfig, SgdOutput, WeightedBatch};
use crate::psi::estimate_coefficients;
use crate::recovery::RecoveredSet;
use crate::region::Region;
use crate::rng::SeedTree;

/// Rows of the stage-1 batch used to evaluate the objective trace.
const TRACE_ROWS: usize = 20_000;

/// Stream stages of the master seed.
pub mod stage {
    pub const MOMENTS: u32 = 1;
    pub const PSI: u32 = 2;
    pub const SGD: u32 = 3;
    pub const EVAL: u32 = 4;
}

/// How samples are mapped to working coordinates before stages 1 and 2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Whitening {
    /// `x ↦ Σ̃^{-1/2}(x − μ̃)`.
    #[default]
    Full,
    /// `x ↦ x − μ̃`.
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Hermite degree.
    pub k: usize,
    pub n_psi: usize,
    pub n_moments: usize,
    #[serde(default)]
    pub whitening: Whitening,
    pub sgd: SgdConfig,
    /// Record the objective at the running average during SGD.
    #[serde(default = "yes")]
    pub trace: bool,
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n_psi == 0 {
            return Err(Error::invalid("n_psi must be at least 1"));
        }
        if self.n_moments < d + 1 {
            return Err(Error::invalid(format!("n_moments must be at least d + 1 = {}", d + 1)));
        }
        crate::hermite::multi_index_count(d, self.k)?;
        self.sgd.validate()
    }
}

/// Result of the moment stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentStage {
    pub alpha_hat: f64,
    pub mu_s: nalgebra::DVector<f64>,
    pub sigma_s: nalgebra::DMatrix<f64>,
    pub map: AffineMap,
    /// Conditional moments in working coordinates.
    pub context_mu: nalgebra::DVector<f64>,
    pub context_sigma: nalgebra::DMatrix<f64>,
}

impl MomentStage {
    pub fn context(&self) -> Result<ObjectiveContext> {
        ObjectiveContext::new(self.context_mu.clone(), self.context_sigma.clone())
    }
}

/// Draws `n` samples, estimates the conditional moments and the mass, and
/// builds the whitening map.
pub fn moment_stage<R: Region>(tg: &TruncatedGaussian<R>, n: usize, whitening: Whitening, seeds: &SeedTree) -> Result<MomentStage> {
    let alpha_cfg = tg.alpha_hat().unwrap_or(1e-3);
    let draw = gaussian::truncated_sample(tg, &mut seeds.stage(stage::MOMENTS).stream(0), n, gaussian::default_max_attempts(alpha_cfg))?;
    let (mu_s, sigma_s) = conditional_moments(&draw.batch)?;
    let map = match whitening {
        Whitening::Full => whitening_transform(&mu_s, &sigma_s)?,
        Whitening::Center => AffineMap::translation(mu_s.clone()),
    };
    let (context_mu, context_sigma) = conditional_moments(&map.apply_batch(&draw.batch)?)?;
    Ok(MomentStage { alpha_hat: draw.acceptance_rate, mu_s, sigma_s, map, context_mu, context_sigma })
}

/// Draws `n` fresh samples, maps them to working coordinates and estimates
/// the degree-`k` coefficients. Returns the expansion and the mapped batch.
pub fn psi_stage<R: Region>(
    tg: &TruncatedGaussian<R>,
    moments: &MomentStage,
    n: usize,
    k: usize,
    seeds: &SeedTree,
) -> Result<(HermiteExpansion, SampleBatch)> {
    let alpha_cfg = tg.alpha_hat().unwrap_or(moments.alpha_hat);
    let draw = gaussian::truncated_sample(tg, &mut seeds.stage(stage::PSI).stream(0), n, gaussian::default_max_attempts(alpha_cfg))?;
    let batch = moments.map.apply_batch(&draw.batch)?;
    Ok((estimate_coefficients(&batch, k)?, batch))
}

/// Runs the `K` SGD repetitions in working coordinates and returns them
/// with the medoid's index.
pub fn sgd_stage<R: Region + Clone>(
    tg: &TruncatedGaussian<R>,
    moments: &MomentStage,
    psi_k: &HermiteExpansion,
    trace_batch: Option<&WeightedBatch>,
    cfg: &SgdConfig,
    seeds: &SeedTree,
) -> Result<(Vec<SgdOutput>, usize, ProjectionSet, f64)> {
    let ctx = moments.context()?;
    let dset = cfg.projection_set(moments.alpha_hat)?;
    let lambda = cfg.resolved_lambda(moments.alpha_hat);
    let budget = gaussian::default_max_attempts(tg.alpha_hat().unwrap_or(moments.alpha_hat));
    let sgd_seeds = match cfg.seed {
        Some(s) => SeedTree::new(s).stage(stage::SGD),
        None => seeds.stage(stage::SGD),
    };
    let (runs, medoid) = run_repetitions(
        cfg.repetitions,
        cfg.iterations,
        lambda,
        |k| RejectionSource::new(tg.clone(), sgd_seeds.stream(k as u64), budget, Some(moments.map.clone())),
        psi_k,
        &ctx,
        &dset,
        trace_batch,
    )?;
    Ok((runs, medoid, dset, lambda))
}

/// Everything the pipeline produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutput {
    /// Estimate in original coordinates.
    pub params: GaussianParams,
    /// Estimate in working coordinates.
    pub working_params: GaussianParams,
    pub moments: MomentStage,
    pub psi_k: HermiteExpansion,
    pub runs: Vec<SgdOutput>,
    pub medoid: usize,
    pub projection: ProjectionSet,
    pub lambda: f64,
    pub recovered: RecoveredSet,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

/// Runs all three stages on samples from `tg`.
pub fn run_pipeline<R: Region + Clone>(tg: &TruncatedGaussian<R>, cfg: &PipelineConfig, seed: u64) -> Result<PipelineOutput> {
    cfg.validate(tg.dim())?;
    let seeds = SeedTree::new(seed);
    let mut timings = Vec::new();

    let t = Instant::now();
    let moments = moment_stage(tg, cfg.n_moments, cfg.whitening, &seeds)?;
    timings.push(("moments".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let (psi_k, batch) = psi_stage(tg, &moments, cfg.n_psi, cfg.k, &seeds)?;
    let trace_batch = if cfg.trace {
        let rows = batch.len().min(TRACE_ROWS);
        let sub = SampleBatch::from_flat(batch.dim(), batch.as_flat()[..rows * batch.dim()].to_vec())?;
        Some(WeightedBatch::new(sub, &psi_k)?)
    } else {
        None
    };
    timings.push(("psi".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let (runs, medoid, projection, lambda) = sgd_stage(tg, &moments, &psi_k, trace_batch.as_ref(), &cfg.sgd, &seeds)?;
    timings.push(("sgd".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let working_params = runs[medoid].params.clone();
    let params = moments.map.pull_back(&working_params)?;
    let recovered = RecoveredSet::new(psi_k.clone(), working_params.clone())?.with_map(moments.map.clone())?;
    timings.push(("recovery".to_string(), t.elapsed().as_secs_f64()));

    Ok(PipelineOutput { params, working_params, moments, psi_k, runs, medoid, projection, lambda, recovered, timings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::SetOracle;

    fn cfg(k: usize, t: usize, whitening: Whitening) -> PipelineConfig {
        PipelineConfig {
            k,
            n_psi: 20_000,
            n_moments: 20_000,
            whitening,
            sgd: SgdConfig { iterations: t, repetitions: 3, ..SgdConfig::default() },
            trace: true,
        }
    }

    #[test]
    fn full_space_returns_conditional_moments() {
        let p = GaussianParams::from_slices(&[0.5, -1.0], &[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let tg = TruncatedGaussian::new(p, SetOracle::full_space()).unwrap();
        let out = run_pipeline(&tg, &cfg(2, 500, Whitening::Full), 7).unwrap();
        assert_eq!(out.moments.alpha_hat, 1.0);
        assert_eq!(out.projection.a, 0.0);
        assert!((out.params.mean() - &out.moments.mu_s).amax() < 1e-9);
        assert!((out.params.covariance() - &out.moments.sigma_s).amax() < 1e-9);
        assert_eq!(out.runs.len(), 3);
        assert!(!out.runs[0].trace.is_empty());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let tg = TruncatedGaussian::new(GaussianParams::standard(2), SetOracle::halfspace(vec![1.0, 0.5], -0.2).unwrap()).unwrap();
        let a = run_pipeline(&tg, &cfg(3, 300, Whitening::Center), 11).unwrap();
        let b = run_pipeline(&tg, &cfg(3, 300, Whitening::Center), 11).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.runs[0].trace, b.runs[0].trace);
        assert_eq!(a.psi_k, b.psi_k);
    }

    #[test]
    fn validation_happens_before_sampling() {
        let tg = TruncatedGaussian::new(GaussianParams::standard(2), SetOracle::full_space()).unwrap();
        let mut c = cfg(2, 10, Whitening::Full);
        c.n_psi = 0;
        assert!(matches!(run_pipeline(&tg, &c, 1), Err(Error::InvalidInput(_))));
    }
}
