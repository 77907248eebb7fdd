//! Hermite coefficients of the weighted indicator
//! `ψ = 1_S · N(μ*, Σ*) / (α* · N₀)` estimated from truncated samples.

use rand::Rng;
use rayon::prelude::*;

use crate::batch::SampleBatch;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{self, standard_log_density, GaussianParams, TruncatedGaussian};
use crate::hermite::{HermiteBasis, HermiteExpansion, MultiIndex};
use crate::sets::SetOracle;
use crate::stats::{McEstimate, Welford};

const CHUNK_ROWS: usize = 2048;

/// Ground truth for `ψ`, available only when the generating law is known.
#[derive(Debug, Clone)]
pub struct PsiTarget {
    pub true_params: GaussianParams,
    pub set: SetOracle,
    pub alpha_star: f64,
}

impl PsiTarget {
    pub fn new(true_params: GaussianParams, set: SetOracle, alpha_star: f64) -> Result<Self> {
        if !(alpha_star > 0.0 && alpha_star <= 1.0) {
            return Err(Error::invalid(format!("alpha_star must lie in (0, 1], got {alpha_star}")));
        }
        crate::region::check_region_dim(&set, true_params.dim())?;
        Ok(Self { true_params, set, alpha_star })
    }

    /// Uses the closed-form mass of the set when available and a Monte Carlo
    /// estimate with `n` draws otherwise.
    pub fn with_estimated_mass<R: Rng + ?Sized>(params: GaussianParams, set: SetOracle, rng: &mut R, n: usize) -> Result<Self> {
        let alpha = match set.exact_mass(&params) {
            Some(a) => a,
            None => gaussian::mass_estimate(&params, &set, rng, n)?.value,
        };
        Self::new(params, set, alpha)
    }

    pub fn dim(&self) -> usize {
        self.true_params.dim()
    }

    pub fn psi(&self, x: &[f64]) -> Result<f64> {
        if !self.set.contains(x)? {
            return Ok(0.0);
        }
        let lw = self.true_params.log_density(x)? - standard_log_density(x);
        Ok(lw.exp() / self.alpha_star)
    }

    pub fn truncated(&self) -> Result<TruncatedGaussian<SetOracle>> {
        TruncatedGaussian::new(self.true_params.clone(), self.set.clone())?.with_alpha(self.alpha_star)
    }
}

/// Hermite coefficients `c̃_V = (1/N) Σᵢ H_V(xᵢ)` for all `|V| ≤ k`.
pub fn estimate_coefficients(samples: &SampleBatch, k: usize) -> Result<HermiteExpansion> {
    estimate_coefficients_with_se(samples, k).map(|(e, _)| e)
}

/// Coefficients together with the standard error of each sample mean.
///
/// Rows are processed in fixed-size chunks in parallel and merged in chunk
/// order, so the result does not depend on the thread count.
pub fn estimate_coefficients_with_se(samples: &SampleBatch, k: usize) -> Result<(HermiteExpansion, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let d = samples.dim();
    let basis = HermiteBasis::new(d, k)?;
    let m = basis.len();
    let partials: Vec<Vec<Welford>> = samples
        .as_flat()
        .par_chunks(CHUNK_ROWS * d)
        .map(|chunk| {
            let mut acc = vec![Welford::new(); m];
            let mut table = vec![0.0; basis.scratch_len()];
            let mut vals = vec![0.0; m];
            for x in chunk.chunks_exact(d) {
                basis.eval_all(x, &mut table, &mut vals);
                for (a, v) in acc.iter_mut().zip(&vals) {
                    a.push(*v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Welford::new(); m];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    let n = samples.len() as f64;
    let mut coeffs: Vec<f64> = total.iter().map(Welford::mean).collect();
    let mut se: Vec<f64> = total.iter().map(|w| if w.count() > 1 { (w.variance() / n).sqrt() } else { 0.0 }).collect();
    coeffs[0] = 1.0;
    se[0] = 0.0;
    Ok((HermiteExpansion::from_coeffs(d, k, coeffs)?, se))
}

/// `ψ_k(x) = max(0, Σ c̃_V H_V(x))`.
pub fn eval_psi_k(expansion: &HermiteExpansion, x: &[f64]) -> Result<f64> {
    expansion.eval_clamped(x)
}

/// Monte Carlo estimate of `E_{x∼N₀}[(ψ_k(x) − ψ(x))²]`; `clamp = false`
/// uses the raw expansion instead of `ψ_k`.
pub fn psi_l2_error<R: Rng + ?Sized>(
    expansion: &HermiteExpansion,
    target: &PsiTarget,
    rng: &mut R,
    n: usize,
    clamp: bool,
) -> Result<McEstimate> {
    check_dim(target.dim(), expansion.dim())?;
    if n < 2 {
        return Err(Error::invalid("n must be at least 2"));
    }
    let std = GaussianParams::standard(target.dim());
    let mut ev = expansion.evaluator();
    let mut x = vec![0.0; target.dim()];
    let mut w = Welford::new();
    for _ in 0..n {
        std.sample_into(rng, &mut x);
        let approx = if clamp { ev.eval_clamped(&x) } else { ev.eval(&x) };
        w.push((approx - target.psi(&x)?).powi(2));
    }
    Ok(w.estimate())
}

/// Empirical variance of `c̃_V` over `trials` independent batches of `n`
/// truncated samples.
pub fn coefficient_variance_probe<R: Rng + ?Sized>(
    target: &PsiTarget,
    v: &MultiIndex,
    rng: &mut R,
    n: usize,
    trials: usize,
) -> Result<f64> {
    if trials < 30 {
        return Err(Error::invalid("at least 30 trials are required"));
    }
    check_dim(target.dim(), v.dim())?;
    let tg = target.truncated()?;
    let budget = gaussian::default_max_attempts(target.alpha_star);
    let mut w = Welford::new();
    for _ in 0..trials {
        let batch = gaussian::truncated_sample(&tg, rng, n, budget)?.batch;
        let mut sum = 0.0;
        for x in batch.rows() {
            sum += crate::hermite::hermite_multi(v, x)?;
        }
        w.push(sum / n as f64);
    }
    Ok(w.variance())
}

/// Degree suggested by the sample-complexity bound with every unspecified
/// polynomial constant set to 1: `⌈Γ² / (α ε⁴)⌉`.
pub fn suggested_degree(alpha: f64, gsa: f64, eps: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(gsa >= 0.0) || !(eps > 0.0) {
        return Err(Error::invalid("need alpha in (0, 1], gsa >= 0 and eps > 0"));
    }
    let k = (gsa * gsa / (alpha * eps.powi(4))).ceil();
    if k > u32::MAX as f64 {
        return Err(Error::SizeLimit(format!("suggested degree {k:e} is too large")));
    }
    Ok(k as usize)
}
