//! The two-hypothesis mean-estimation experiment on the lower-bound family:
//! samples from `N(e₁, I)` on `S₊` or from `N(−e₁, I)` on the mirrored `S₋`
//! look alike until two of them share an orthant cell.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianParams, TruncatedGaussian};
use crate::sets::{build_lower_bound_set, lower_bound_target_mass};

/// Largest `d` accepted by the experiment.
pub const MAX_EXPERIMENT_DIM: usize = 14;

/// Orthant cell of coordinates `2..d+1`: bit `i` set iff `x[i+1] < 0`.
pub fn cell_index(x: &[f64]) -> usize {
    x[1..].iter().enumerate().fold(0, |acc, (i, &y)| if y < 0.0 { acc | 1 << i } else { acc })
}

/// Number of samples that land in an already occupied cell.
pub fn count_collisions(samples: &SampleBatch) -> usize {
    let mut seen = std::collections::HashSet::new();
    samples.rows().filter(|x| !seen.insert(cell_index(x))).count()
}

/// `1 − ∏_{i<m} (1 − i/cells)`, the chance that `m` uniform draws over
/// `cells` cells are not all distinct.
pub fn birthday_probability(m: usize, cells: usize) -> f64 {
    let mut p_distinct = 1.0;
    for i in 0..m {
        p_distinct *= 1.0 - i as f64 / cells as f64;
        if p_distinct <= 0.0 {
            return 1.0;
        }
    }
    1.0 - p_distinct
}

/// `ln P(t ≥ m)` for a threshold drawn from `F(t) = 1 − e^{−2t}` with an
/// atom at 1.
fn log_tail(m: f64) -> f64 {
    if m <= 0.0 {
        0.0
    } else if m <= 1.0 {
        -2.0 * m
    } else {
        f64::NEG_INFINITY
    }
}

/// Posterior log-odds of the `+` hypothesis against `−` under equal priors,
/// with the unknown thresholds integrated out cell by cell. The slab edge
/// `−1 + δ` is ignored.
pub fn posterior_log_odds(samples: &SampleBatch) -> f64 {
    let mut cells: std::collections::HashMap<usize, (f64, f64)> = std::collections::HashMap::new();
    let mut gaussian_term = 0.0;
    for x in samples.rows() {
        gaussian_term += 2.0 * x[0];
        let e = cells.entry(cell_index(x)).or_insert((0.0, 0.0));
        if x[0] > 0.0 {
            e.0 = e.0.max(x[0]);
        } else {
            e.1 = e.1.max(-x[0]);
        }
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_unstable();
    let set_term: f64 = keys
        .iter()
        .map(|k| {
            let (right, left) = cells[k];
            log_tail(right) - log_tail(left)
        })
        .sum();
    let lo = gaussian_term + set_term;
    // both sides ruled out: no evidence either way
    if lo.is_nan() {
        0.0
    } else {
        lo
    }
}

/// Posterior-mean estimate `(2P₊ − 1) e₁`.
pub fn estimate_mean(samples: &SampleBatch) -> DVector<f64> {
    let lo = posterior_log_odds(samples);
    let p_plus = 1.0 / (1.0 + (-lo).exp());
    let mut mu = DVector::zeros(samples.dim());
    mu[0] = 2.0 * p_plus - 1.0;
    mu
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundTrial {
    /// `+1` if the samples came from `S₊`, `−1` for `S₋`.
    pub sign: f64,
    pub error: f64,
    pub collisions: usize,
    pub delta: f64,
}

/// One trial: draw a random set, pick a side with a fair coin, draw `m`
/// samples and measure the estimator's error.
pub fn run_trial<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Result<LowerBoundTrial> {
    if d > MAX_EXPERIMENT_DIM {
        return Err(Error::SizeLimit(format!("d = {d} exceeds {MAX_EXPERIMENT_DIM}")));
    }
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let plus = build_lower_bound_set(d, rng)?;
    let delta = match plus.kind() {
        crate::sets::SetKind::LowerBoundFamily { delta, .. } => *delta,
        _ => unreachable!("builder returns a lower-bound set"),
    };
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let set = if sign > 0.0 { plus } else { plus.mirrored()? };
    let mut mean = vec![0.0; d + 1];
    mean[0] = sign;
    let tg = TruncatedGaussian::new(GaussianParams::isotropic(&mean, 1.0)?, set)?;
    // tens of thousands of samples per experiment: keep the chance of one
    // sample exhausting its budget negligible
    let budget = (50.0 / lower_bound_target_mass(d)).ceil() as usize;
    let samples = gaussian::truncated_sample(&tg, rng, m, budget)?.batch;
    let mu_hat = estimate_mean(&samples);
    let truth = DVector::from_vec(mean);
    Ok(LowerBoundTrial { sign, error: (mu_hat - truth).norm(), collisions: count_collisions(&samples), delta })
}
