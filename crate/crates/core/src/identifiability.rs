//! Hypothesis selection and moment matching: the min-mass box ERM, the
//! Scheffé tournament, low-dimensional parameter grids and raw moments.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{self, GaussianParams, TruncatedGaussian};
use crate::hermite::{enumerate_multi_indices, HermiteBasis, MultiIndex};
use crate::rng::SeedTree;
use crate::sets::SetOracle;
use crate::stats::Welford;

/// Largest grid `grid_hypotheses` will build.
pub const MAX_GRID_SIZE: usize = 1_000_000;

/// A candidate truncated Gaussian with density `1_S · N(μ, Σ) / α̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub params: GaussianParams,
    pub set: SetOracle,
    pub alpha_hat: f64,
}

impl Hypothesis {
    pub fn new(params: GaussianParams, set: SetOracle, alpha_hat: f64) -> Result<Self> {
        if !(alpha_hat > 0.0 && alpha_hat <= 1.0) {
            return Err(Error::invalid(format!("alpha_hat must lie in (0, 1], got {alpha_hat}")));
        }
        crate::region::check_region_dim(&set, params.dim())?;
        Ok(Self { params, set, alpha_hat })
    }

    /// Mass from the closed form when available, else `n` Monte Carlo draws.
    pub fn with_mass<R: Rng + ?Sized>(params: GaussianParams, set: SetOracle, rng: &mut R, n: usize) -> Result<Self> {
        let alpha = match set.exact_mass(&params) {
            Some(a) => a,
            None => gaussian::mass_estimate(&params, &set, rng, n)?.value,
        };
        if alpha <= 0.0 {
            return Err(Error::LowMass { acceptance_estimate: alpha, max_attempts: n });
        }
        Self::new(params, set, alpha.min(1.0))
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if self.set.contains(x)? {
            Ok(self.params.log_density(x)? - self.alpha_hat.ln())
        } else {
            Ok(f64::NEG_INFINITY)
        }
    }

    pub fn truncated(&self) -> Result<TruncatedGaussian<SetOracle>> {
        TruncatedGaussian::new(self.params.clone(), self.set.clone())?.with_alpha(self.alpha_hat)
    }
}

/// The componentwise bounding box of the samples. Every axis box containing
/// the samples contains it, so it has the least mass under any Gaussian.
pub fn erm_min_mass_box(samples: &SampleBatch, guess: &GaussianParams) -> Result<SetOracle> {
    check_dim(guess.dim(), samples.dim())?;
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let d = samples.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in samples.rows() {
        for i in 0..d {
            lo[i] = lo[i].min(x[i]);
            hi[i] = hi[i].max(x[i]);
        }
    }
    SetOracle::axis_box(lo, hi)
}

/// Tournament knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TournamentConfig {
    pub eps: f64,
    pub delta: f64,
    /// Multiplier in the per-hypothesis draw count `⌈c_t ln(3N²/δ)/ε²⌉`.
    #[serde(default = "default_ct")]
    pub c_t: f64,
}

fn default_ct() -> f64 {
    8.0
}

impl TournamentConfig {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        let c = Self { eps, delta, c_t: default_ct() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) || !(self.delta > 0.0 && self.delta < 1.0) || !(self.c_t > 0.0) {
            return Err(Error::invalid("tournament needs eps, delta in (0, 1) and c_t > 0"));
        }
        Ok(())
    }

    pub fn draws(&self, n_hypotheses: usize) -> usize {
        let n = n_hypotheses.max(1) as f64;
        (self.c_t * (3.0 * n * n / self.delta).ln() / (self.eps * self.eps)).ceil() as usize
    }
}

/// All pairwise match outcomes and the selected hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentReport {
    /// `wins[i][j]` is 1 if `i` beat `j`, ½ for a draw, 0 for a loss; the
    /// diagonal is 0.
    pub wins: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    /// `None` when no hypothesis won at least half of its matches.
    pub winner: Option<usize>,
    pub draws_per_hypothesis: usize,
}

/// Scheffé tournament between `hypotheses` using the data in `data`.
///
/// Each hypothesis is sampled once, `cfg.draws(N)` points on its own
/// substream, and those samples are shared by all of its matches. In the
/// match `(i, j)` with `A = {h_i > h_j}`, `i` wins if its mass on `A` is
/// closer to the empirical data mass than `j`'s; equal distances are draws.
pub fn tournament<R: Rng + ?Sized>(
    data: &SampleBatch,
    hypotheses: &[Hypothesis],
    cfg: &TournamentConfig,
    rng: &mut R,
) -> Result<TournamentReport> {
    cfg.validate()?;
    let n = hypotheses.len();
    if n == 0 {
        return Err(Error::invalid("no hypotheses"));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    for h in hypotheses {
        check_dim(data.dim(), h.dim())?;
    }
    let m = cfg.draws(n);
    let seeds = SeedTree::from_rng(rng);
    let samples: Vec<SampleBatch> = hypotheses
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let tg = h.truncated()?;
            let budget = gaussian::default_max_attempts(h.alpha_hat);
            Ok(gaussian::truncated_sample(&tg, &mut seeds.stream(i as u64), m, budget)?.batch)
        })
        .collect::<Result<_>>()?;

    // log_dens[s][h][r]: hypothesis h at row r of sample set s (0 = data)
    let sets: Vec<&SampleBatch> = std::iter::once(data).chain(samples.iter()).collect();
    let log_dens: Vec<Vec<Vec<f64>>> = sets
        .par_iter()
        .map(|b| hypotheses.iter().map(|h| b.rows().map(|x| h.log_density(x)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let frac = |s: usize, i: usize, j: usize| -> f64 {
        let li = &log_dens[s][i];
        let lj = &log_dens[s][j];
        li.iter().zip(lj).filter(|(a, b)| a > b).count() as f64 / li.len() as f64
    };
    let mut wins = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let q = frac(0, i, j);
            let pi = frac(i + 1, i, j);
            let pj = frac(j + 1, i, j);
            let (di, dj) = ((pi - q).abs(), (pj - q).abs());
            let (wi, wj) = if di < dj {
                (1.0, 0.0)
            } else if dj < di {
                (0.0, 1.0)
            } else {
                (0.5, 0.5)
            };
            wins[i][j] = wi;
            wins[j][i] = wj;
        }
    }
    let scores: Vec<f64> = wins.iter().map(|r| r.iter().sum()).collect();
    let needed = (n - 1) as f64 / 2.0;
    let mut winner = None;
    for (i, &s) in scores.iter().enumerate() {
        if s >= needed && winner.is_none_or(|w: usize| s > scores[w]) {
            winner = Some(i);
        }
    }
    Ok(TournamentReport { wins, scores, winner, draws_per_hypothesis: m })
}

/// Grid points `−r, −r + step, …` up to `r`; a single `0` when `step > 2r`.
fn axis_grid(radius: f64, step: f64) -> Vec<f64> {
    if step > 2.0 * radius {
        return vec![0.0];
    }
    let count = ((2.0 * radius) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| -radius + i as f64 * step).collect()
}

/// Hypotheses over a Cartesian grid of means in `[−r, r]^d` and diagonal
/// covariances with entries from `variances`, crossed with `sets`. Masses
/// come from the closed form when available, else `mass_draws` Monte Carlo
/// draws.
pub fn grid_hypotheses<R: Rng + ?Sized>(
    dim: usize,
    radius: f64,
    step: f64,
    variances: &[f64],
    sets: &[SetOracle],
    rng: &mut R,
    mass_draws: usize,
) -> Result<Vec<Hypothesis>> {
    if dim == 0 || dim > 2 {
        return Err(Error::invalid("grid hypotheses support d = 1 or 2"));
    }
    if !(radius >= 0.0) || !(step > 0.0) || variances.is_empty() || sets.is_empty() {
        return Err(Error::invalid("need radius >= 0, step > 0 and non-empty variance and set lists"));
    }
    let axis = axis_grid(radius, step);
    let size = (axis.len() as u128).pow(dim as u32) * (variances.len() as u128).pow(dim as u32) * sets.len() as u128;
    if size > MAX_GRID_SIZE as u128 {
        return Err(Error::SizeLimit(format!("grid of {size} hypotheses exceeds {MAX_GRID_SIZE}")));
    }
    let product = |vals: &[f64]| -> Vec<Vec<f64>> {
        if dim == 1 {
            vals.iter().map(|&v| vec![v]).collect()
        } else {
            vals.iter().flat_map(|&a| vals.iter().map(move |&b| vec![a, b])).collect()
        }
    };
    let means = product(&axis);
    let covs = product(variances);
    let mut out = Vec::with_capacity(size as usize);
    for set in sets {
        for m in &means {
            for v in &covs {
                let params = GaussianParams::diagonal(m, v)?;
                out.push(Hypothesis::with_mass(params, set.clone(), rng, mass_draws)?);
            }
        }
    }
    Ok(out)
}

/// Raw moments `m_V = E[x^V]` for all `|V| ≤ k`, in Hermite enumeration
/// order, with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub dim: usize,
    pub max_degree: usize,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl MomentVector {
    pub fn get(&self, v: &MultiIndex) -> Option<f64> {
        let basis = HermiteBasis::new(self.dim, self.max_degree).ok()?;
        basis.position(v).map(|i| self.values[i])
    }

    pub fn indices(&self) -> Result<Vec<MultiIndex>> {
        enumerate_multi_indices(self.dim, self.max_degree)
    }
}

/// Empirical raw moments `(1/N) Σᵢ xᵢ^V`.
pub fn empirical_moments(samples: &SampleBatch, k: usize) -> Result<MomentVector> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let d = samples.dim();
    let basis = HermiteBasis::new(d, k)?;
    let idx: Vec<Vec<u32>> = basis.indices().map(|v| v.to_vec()).collect();
    let m = idx.len();
    let partials: Vec<Vec<Welford>> = samples
        .as_flat()
        .par_chunks(2048 * d)
        .map(|chunk| {
            let mut acc = vec![Welford::new(); m];
            let mut pow = vec![0.0; d * (k + 1)];
            for x in chunk.chunks_exact(d) {
                for i in 0..d {
                    pow[i * (k + 1)] = 1.0;
                    for e in 1..=k {
                        pow[i * (k + 1) + e] = pow[i * (k + 1) + e - 1] * x[i];
                    }
                }
                for (a, v) in acc.iter_mut().zip(&idx) {
                    a.push(v.iter().enumerate().map(|(i, &e)| pow[i * (k + 1) + e as usize]).product());
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Welford::new(); m];
    for p in &partials {
        for (t, w) in total.iter_mut().zip(p) {
            t.merge(w);
        }
    }
    let mut values: Vec<f64> = total.iter().map(Welford::mean).collect();
    let mut std_errors: Vec<f64> = total.iter().map(|w| w.estimate().std_error).collect();
    values[0] = 1.0;
    std_errors[0] = 0.0;
    Ok(MomentVector { dim: d, max_degree: k, values, std_errors })
}

fn check_same_shape(a: &MomentVector, b: &MomentVector) -> Result<()> {
    if a.dim != b.dim || a.max_degree != b.max_degree {
        return Err(Error::invalid(format!(
            "moment vectors differ in shape: (d={}, k={}) vs (d={}, k={})",
            a.dim, a.max_degree, b.dim, b.max_degree
        )));
    }
    Ok(())
}

/// `max_V |a_V − b_V|`.
pub fn moment_distance(a: &MomentVector, b: &MomentVector) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// `max_V √(se_a² + se_b²)`, the Monte Carlo scale of [`moment_distance`].
pub fn moment_noise(a: &MomentVector, b: &MomentVector) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(a.std_errors.iter().zip(&b.std_errors).map(|(x, y)| (x * x + y * y).sqrt()).fold(0.0, f64::max))
}
