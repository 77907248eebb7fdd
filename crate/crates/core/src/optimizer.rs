//! The convex objective `M(u, B) = E[e^h N₀ ψ_k]`, its stochastic gradient,
//! projection onto the near-isotropic set `D`, and projected SGD.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{isotropic_check_raw, AffineMap, GaussianParams, IsotropicCert, TruncatedGaussian};
use crate::hermite::HermiteExpansion;
use crate::linalg;
use crate::region::Region;
use crate::rng::{SeedTree, StreamRng};
use crate::stats::Welford;

/// Log weights above this are clamped before exponentiation.
pub const LOG_WEIGHT_CLAMP: f64 = 700.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const BOUNDARY_MARGIN: f64 = 1e-12;

/// `(u, B) = (Σ⁻¹μ, Σ⁻¹)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamPoint {
    pub u: DVector<f64>,
    pub b: DMatrix<f64>,
}

impl ReparamPoint {
    pub fn new(u: DVector<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_dim(u.len(), b.nrows())?;
        check_dim(u.len(), b.ncols())?;
        if !linalg::is_symmetric(&b, linalg::SYMMETRY_TOL) {
            return Err(Error::invalid("B is not symmetric"));
        }
        Ok(Self { u, b })
    }

    pub fn identity(d: usize) -> Self {
        Self { u: DVector::zeros(d), b: DMatrix::identity(d, d) }
    }

    pub fn from_params(p: &GaussianParams) -> Self {
        let b = p.precision();
        Self { u: &b * p.mean(), b }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `(μ, Σ) = (B⁻¹u, B⁻¹)`.
    pub fn to_params(&self) -> Result<GaussianParams> {
        let sigma = linalg::spd_inverse(&self.b)?;
        let mu = &sigma * &self.u;
        GaussianParams::new(mu, linalg::symmetrize(&sigma))
    }

    /// `B` in row-major order followed by `u`; length `d² + d`.
    pub fn to_vec(&self) -> Vec<f64> {
        let d = self.dim();
        let mut v = Vec::with_capacity(d * d + d);
        for i in 0..d {
            for j in 0..d {
                v.push(self.b[(i, j)]);
            }
        }
        v.extend(self.u.iter());
        v
    }

    /// Inverse of [`to_vec`](Self::to_vec). `B` is not required to be
    /// symmetric, which finite-difference probes rely on.
    pub fn from_vec(d: usize, v: &[f64]) -> Result<Self> {
        check_dim(d * d + d, v.len())?;
        Ok(Self { b: DMatrix::from_row_slice(d, d, &v[..d * d]), u: DVector::from_column_slice(&v[d * d..]) })
    }

    fn is_finite(&self) -> bool {
        self.u.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// The set `D` of points whose implied `(μ, Σ)` are in `(a, b)`-isotropic
/// position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSet {
    pub a: f64,
    pub b: f64,
}

impl ProjectionSet {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        IsotropicCert::new(a, b)?;
        Ok(Self { a, b })
    }

    /// `a = c · ln(1/α)`.
    pub fn from_alpha(alpha: f64, c: f64, b: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(c >= 0.0) {
            return Err(Error::invalid(format!("need alpha in (0, 1] and c >= 0, got alpha={alpha}, c={c}")));
        }
        Self::new((c * (1.0 / alpha).ln()).max(0.0), b)
    }

    pub fn cert(&self) -> IsotropicCert {
        IsotropicCert::new(self.a, self.b).expect("validated at construction")
    }

    pub fn contains(&self, p: &ReparamPoint) -> bool {
        let Ok(sigma) = linalg::spd_inverse(&p.b) else {
            return false;
        };
        let mu = &sigma * &p.u;
        isotropic_check_raw(&mu, &linalg::symmetrize(&sigma), self.cert())
    }
}

/// Maps `p` into `D`: clip the covariance eigenvalues into the band, shrink
/// `Σ` toward `I` in Frobenius norm, then scale `μ` onto the ball. Members
/// are returned unchanged.
///
/// Clipping acts on the eigenvalues of `B`, so an indefinite `B` produced by a
/// large step is handled; in that case `μ` is read off the clipped `B`.
pub fn project_to_d(p: &ReparamPoint, dset: &ProjectionSet) -> Result<ReparamPoint> {
    if dset.contains(p) {
        return Ok(p.clone());
    }
    if !p.is_finite() {
        return Err(Error::NumericalOverflow("non-finite SGD iterate".into()));
    }
    let d = p.dim();
    if dset.a == 0.0 {
        return Ok(ReparamPoint::identity(d));
    }
    let b = linalg::symmetrize(&p.b);
    let eig = linalg::sym_eigen(&b);
    let scale = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|l| l.abs() <= 1e-14 * scale) || scale == 0.0 {
        return Err(Error::Factorization("B is singular".into()));
    }
    let (lo, hi) = IsotropicCert::new(dset.a, dset.b)?.band();
    let (lo, hi) = if lo * (1.0 + BOUNDARY_MARGIN) <= hi * (1.0 - BOUNDARY_MARGIN) {
        (lo * (1.0 + BOUNDARY_MARGIN), hi * (1.0 - BOUNDARY_MARGIN))
    } else {
        (1.0, 1.0)
    };
    let v = &eig.eigenvectors;
    let positive = eig.eigenvalues.iter().all(|&l| l > 0.0);
    let mut sig: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l > 0.0 { (1.0 / l).clamp(lo, hi) } else { hi }).collect();
    // μ in the eigenbasis of B
    let ut = v.transpose() * &p.u;
    let mut mu_t: Vec<f64> = if positive {
        ut.iter().zip(eig.eigenvalues.iter()).map(|(u, l)| u / l).collect()
    } else {
        ut.iter().zip(&sig).map(|(u, s)| u * s).collect()
    };

    let radius2 = dset.a * (1.0 - BOUNDARY_MARGIN);
    for _ in 0..10 {
        for s in sig.iter_mut() {
            *s = s.clamp(lo, hi);
        }
        let dev2: f64 = sig.iter().map(|s| (s - 1.0).powi(2)).sum();
        if dev2 > radius2 {
            let shrink = (radius2 / dev2).sqrt();
            for s in sig.iter_mut() {
                *s = 1.0 + (*s - 1.0) * shrink;
            }
        }
        let in_band = sig.iter().all(|s| (lo..=hi).contains(s));
        if in_band && sig.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>() <= radius2 {
            break;
        }
    }
    let norm2: f64 = mu_t.iter().map(|m| m * m).sum();
    if norm2 > radius2 {
        let shrink = (radius2 / norm2).sqrt();
        for m in mu_t.iter_mut() {
            *m *= shrink;
        }
    }
    let binv = DVector::from_iterator(d, sig.iter().map(|s| 1.0 / s));
    let b_new = linalg::symmetrize(&(v * DMatrix::from_diagonal(&binv) * v.transpose()));
    let u_new = v * DVector::from_iterator(d, mu_t.iter().zip(&sig).map(|(m, s)| m / s));
    Ok(ReparamPoint { u: u_new, b: b_new })
}

/// Empirical conditional moments that the objective is centred on.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    pub mu_s: DVector<f64>,
    pub sigma_s: DMatrix<f64>,
    second_moment: DMatrix<f64>,
}

impl ObjectiveContext {
    pub fn new(mu_s: DVector<f64>, sigma_s: DMatrix<f64>) -> Result<Self> {
        check_dim(mu_s.len(), sigma_s.nrows())?;
        check_dim(mu_s.len(), sigma_s.ncols())?;
        let second_moment = &sigma_s + &mu_s * mu_s.transpose();
        Ok(Self { mu_s, sigma_s, second_moment })
    }

    pub fn dim(&self) -> usize {
        self.mu_s.len()
    }

    /// `w⁰ = (Σ̃⁻¹, Σ̃⁻¹μ̃)`.
    pub fn initial_point(&self) -> Result<ReparamPoint> {
        let b = linalg::spd_inverse(&self.sigma_s)?;
        Ok(ReparamPoint { u: &b * &self.mu_s, b: linalg::symmetrize(&b) })
    }
}

/// Evaluates `log(e^h N₀(x)) = ½xᵀ(B−I)x − ½tr((B−I)(Σ̃+μ̃μ̃ᵀ)) − uᵀ(x−μ̃)`
/// with the point-dependent constant cached.
struct LogWeight<'a> {
    p: &'a ReparamPoint,
    offset: f64,
}

impl<'a> LogWeight<'a> {
    fn new(p: &'a ReparamPoint, ctx: &ObjectiveContext) -> Self {
        let d = p.dim();
        let mut tr = 0.0;
        for i in 0..d {
            for j in 0..d {
                let bij = p.b[(i, j)] - if i == j { 1.0 } else { 0.0 };
                tr += bij * ctx.second_moment[(j, i)];
            }
        }
        Self { p, offset: -0.5 * tr + p.u.dot(&ctx.mu_s) }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..d {
            let mut row = -x[i];
            for j in 0..d {
                row += self.p.b[(i, j)] * x[j];
            }
            quad += x[i] * row;
            lin += self.p.u[i] * x[i];
        }
        0.5 * quad - lin + self.offset
    }
}

/// `h(u, B; x)`. Adding `log N₀(x)` gives the log weight.
pub fn h_value(p: &ReparamPoint, x: &[f64], ctx: &ObjectiveContext) -> Result<f64> {
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), ctx.dim())?;
    let sq: f64 = x.iter().map(|v| v * v).sum();
    Ok(LogWeight::new(p, ctx).eval(x) + 0.5 * sq + x.len() as f64 * HALF_LN_2PI)
}

/// `h + log N₀(x)`.
pub fn log_weight(p: &ReparamPoint, x: &[f64], ctx: &ObjectiveContext) -> Result<f64> {
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), ctx.dim())?;
    Ok(LogWeight::new(p, ctx).eval(x))
}

/// A batch with `ψ_k` precomputed at each row.
#[derive(Debug, Clone)]
pub struct WeightedBatch {
    pub samples: SampleBatch,
    pub psi: Vec<f64>,
}

impl WeightedBatch {
    pub fn new(samples: SampleBatch, psi_k: &HermiteExpansion) -> Result<Self> {
        check_dim(psi_k.dim(), samples.dim())?;
        let d = samples.dim();
        let psi = samples
            .as_flat()
            .par_chunks(1024 * d)
            .flat_map_iter(|chunk| {
                let mut ev = psi_k.evaluator();
                chunk.chunks_exact(d).map(move |x| ev.eval_clamped(x)).collect::<Vec<_>>()
            })
            .collect();
        Ok(Self { samples, psi })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Objective value with the number of clamped log weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub value: f64,
    pub std_error: f64,
    pub clamped: usize,
}

/// Sample mean of `e^h N₀(x) ψ_k(x)` over the batch.
pub fn objective_estimate(p: &ReparamPoint, wb: &WeightedBatch, ctx: &ObjectiveContext) -> Result<ObjectiveValue> {
    check_dim(p.dim(), wb.samples.dim())?;
    check_dim(p.dim(), ctx.dim())?;
    if wb.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let lw = LogWeight::new(p, ctx);
    let mut acc = Welford::new();
    let mut clamped = 0usize;
    for (x, &psi) in wb.samples.rows().zip(&wb.psi) {
        let mut l = lw.eval(x);
        if l.is_nan() {
            return Err(Error::NumericalOverflow("NaN log weight".into()));
        }
        if l > LOG_WEIGHT_CLAMP {
            l = LOG_WEIGHT_CLAMP;
            clamped += 1;
        }
        acc.push(if psi == 0.0 { 0.0 } else { l.exp() * psi });
    }
    if clamped == wb.len() {
        return Err(Error::NumericalOverflow(format!("all {clamped} log weights exceed {LOG_WEIGHT_CLAMP}")));
    }
    let est = acc.estimate();
    Ok(ObjectiveValue { value: est.value, std_error: est.std_error, clamped })
}

/// Convenience wrapper evaluating `ψ_k` on the fly.
pub fn objective_estimate_with(
    p: &ReparamPoint,
    samples: &SampleBatch,
    psi_k: &HermiteExpansion,
    ctx: &ObjectiveContext,
) -> Result<ObjectiveValue> {
    objective_estimate(p, &WeightedBatch::new(samples.clone(), psi_k)?, ctx)
}

/// Writes `(½(xxᵀ − Σ̃ − μ̃μ̃ᵀ) ; μ̃ − x) · e^h N₀(x) · ψ` into `out` and
/// reports whether the log weight was clamped.
fn gradient_into(lw: &LogWeight<'_>, x: &[f64], psi: f64, ctx: &ObjectiveContext, out: &mut [f64]) -> Result<bool> {
    let d = x.len();
    if psi == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return Ok(false);
    }
    let mut l = lw.eval(x);
    if l.is_nan() {
        return Err(Error::NumericalOverflow("NaN log weight".into()));
    }
    let clamped = l > LOG_WEIGHT_CLAMP;
    if clamped {
        l = LOG_WEIGHT_CLAMP;
    }
    let w = l.exp() * psi;
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = 0.5 * (x[i] * x[j] - ctx.second_moment[(i, j)]) * w;
        }
        out[d * d + i] = (ctx.mu_s[i] - x[i]) * w;
    }
    Ok(clamped)
}

/// One stochastic gradient of the objective, length `d² + d`, `B` block first.
pub fn gradient_sample(p: &ReparamPoint, x: &[f64], psi_k: &HermiteExpansion, ctx: &ObjectiveContext) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), ctx.dim())?;
    let psi = psi_k.eval_clamped(x)?;
    let d = p.dim();
    let mut out = vec![0.0; d * d + d];
    gradient_into(&LogWeight::new(p, ctx), x, psi, ctx, &mut out)?;
    Ok(out)
}

/// Mean and standard error of the stochastic gradient over a batch.
pub fn gradient_mean(p: &ReparamPoint, wb: &WeightedBatch, ctx: &ObjectiveContext) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(p.dim(), wb.samples.dim())?;
    let d = p.dim();
    let lw = LogWeight::new(p, ctx);
    let mut acc = vec![Welford::new(); d * d + d];
    let mut g = vec![0.0; d * d + d];
    for (x, &psi) in wb.samples.rows().zip(&wb.psi) {
        gradient_into(&lw, x, psi, ctx, &mut g)?;
        for (a, v) in acc.iter_mut().zip(&g) {
            a.push(*v);
        }
    }
    let mean = acc.iter().map(Welford::mean).collect();
    let se = acc.iter().map(|a| a.estimate().std_error).collect();
    Ok((mean, se))
}

/// `(f(x+εz) − 2f(x) + f(x−εz)) / ε²`.
pub fn second_difference(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], z: &[f64], eps: f64) -> Result<f64> {
    check_dim(x.len(), z.len())?;
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let shifted = |s: f64| x.iter().zip(z).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    Ok((f(&shifted(eps))? - 2.0 * f(x)? + f(&shifted(-eps))?) / (eps * eps))
}

/// Directional second difference of the empirical objective at `p`.
pub fn hessian_probe(p: &ReparamPoint, direction: &[f64], wb: &WeightedBatch, ctx: &ObjectiveContext, eps: f64) -> Result<f64> {
    let norm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("direction must have unit norm"));
    }
    let d = p.dim();
    let f = |v: &[f64]| objective_estimate(&ReparamPoint::from_vec(d, v)?, wb, ctx).map(|o| o.value);
    second_difference(f, &p.to_vec(), direction, eps)
}

/// Projected-SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    #[serde(rename = "T")]
    pub iterations: usize,
    /// Step sizes are `1/(λ i)`; defaults to `0.1 α̂³` when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(rename = "K", default = "one")]
    pub repetitions: usize,
    /// Seed for the repetitions' sample streams; falls back to the
    /// experiment seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// `a = c · ln(1/α̂)`.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_b")]
    pub b: f64,
}

fn one() -> usize {
    1
}
fn default_c() -> f64 {
    4.0
}
fn default_b() -> f64 {
    1.0 / 16.0
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { iterations: 50_000, lambda: None, repetitions: 1, seed: None, c: default_c(), b: default_b() }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("sgd.T must be at least 1"));
        }
        if self.repetitions == 0 || self.repetitions % 2 == 0 {
            return Err(Error::invalid("sgd.K must be odd and at least 1"));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::invalid("sgd.lambda must be positive"));
            }
        }
        IsotropicCert::new(self.c.max(0.0), self.b)?;
        if !(self.c >= 0.0) {
            return Err(Error::invalid("sgd.c must be non-negative"));
        }
        Ok(())
    }

    pub fn resolved_lambda(&self, alpha_hat: f64) -> f64 {
        self.lambda.unwrap_or(0.1 * alpha_hat.powi(3))
    }

    pub fn projection_set(&self, alpha_hat: f64) -> Result<ProjectionSet> {
        ProjectionSet::from_alpha(alpha_hat, self.c, self.b)
    }
}

/// A stream of fresh samples for SGD.
pub trait SampleSource {
    fn dim(&self) -> usize;
    fn draw(&mut self, out: &mut [f64]) -> Result<()>;
}

/// Rejection sampling from a truncated Gaussian, optionally mapped through
/// an affine transform after acceptance.
pub struct RejectionSource<R> {
    tg: TruncatedGaussian<R>,
    rng: StreamRng,
    max_attempts: usize,
    map: Option<AffineMap>,
    buf: Vec<f64>,
    pub proposals: u64,
    pub accepted: u64,
}

impl<R: Region> RejectionSource<R> {
    pub fn new(tg: TruncatedGaussian<R>, rng: StreamRng, max_attempts: usize, map: Option<AffineMap>) -> Result<Self> {
        if let Some(m) = &map {
            check_dim(tg.dim(), m.dim())?;
        }
        let d = tg.dim();
        Ok(Self { tg, rng, max_attempts, map, buf: vec![0.0; d], proposals: 0, accepted: 0 })
    }
}

impl<R: Region> SampleSource for RejectionSource<R> {
    fn dim(&self) -> usize {
        self.tg.dim()
    }

    fn draw(&mut self, out: &mut [f64]) -> Result<()> {
        for _ in 0..self.max_attempts {
            self.tg.params.sample_into(&mut self.rng, &mut self.buf);
            self.proposals += 1;
            if self.tg.set.contains(&self.buf)? {
                self.accepted += 1;
                match &self.map {
                    Some(m) => m.apply(&self.buf, out),
                    None => out.copy_from_slice(&self.buf),
                }
                return Ok(());
            }
        }
        Err(Error::LowMass { acceptance_estimate: self.accepted as f64 / self.proposals.max(1) as f64, max_attempts: self.max_attempts })
    }
}

/// Uniform draws with replacement from a fixed batch.
pub struct ResampleSource<'a> {
    batch: &'a SampleBatch,
    rng: StreamRng,
}

impl<'a> ResampleSource<'a> {
    pub fn new(batch: &'a SampleBatch, rng: StreamRng) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        Ok(Self { batch, rng })
    }
}

impl SampleSource for ResampleSource<'_> {
    fn dim(&self) -> usize {
        self.batch.dim()
    }

    fn draw(&mut self, out: &mut [f64]) -> Result<()> {
        let i = self.rng.random_range(0..self.batch.len());
        out.copy_from_slice(self.batch.row(i));
        Ok(())
    }
}

/// Objective at the running average, recorded during SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub clamp_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgdOutput {
    pub params: GaussianParams,
    pub point: ReparamPoint,
    pub trace: Vec<TracePoint>,
    pub clamp_count: u64,
}

/// Projected SGD with step `1/(λ i)`, one fresh sample per step and iterate
/// averaging. When `trace_batch` is given the objective at the running
/// average is recorded every `T/100` iterations.
pub fn sgd_run<S: SampleSource + ?Sized>(
    iterations: usize,
    lambda: f64,
    source: &mut S,
    psi_k: &HermiteExpansion,
    ctx: &ObjectiveContext,
    dset: &ProjectionSet,
    trace_batch: Option<&WeightedBatch>,
) -> Result<SgdOutput> {
    let d = ctx.dim();
    check_dim(d, source.dim())?;
    check_dim(d, psi_k.dim())?;
    if iterations == 0 || !(lambda > 0.0) {
        return Err(Error::invalid("need T >= 1 and lambda > 0"));
    }
    let mut w = project_to_d(&ctx.initial_point()?, dset)?;
    let mut sum = vec![0.0; d * d + d];
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d * d + d];
    let mut ev = psi_k.evaluator();
    let mut clamp_count = 0u64;
    let mut trace = Vec::new();
    let every = (iterations / 100).max(1);

    for i in 1..=iterations {
        source.draw(&mut x)?;
        let psi = ev.eval_clamped(&x);
        if gradient_into(&LogWeight::new(&w, ctx), &x, psi, ctx, &mut g)? {
            clamp_count += 1;
        }
        let eta = 1.0 / (lambda * i as f64);
        for r in 0..d {
            for c in 0..d {
                w.b[(r, c)] -= eta * g[r * d + c];
            }
            w.u[r] -= eta * g[d * d + r];
        }
        w = project_to_d(&w, dset)?;
        for (s, v) in sum.iter_mut().zip(w.to_vec()) {
            *s += v;
        }
        if let Some(tb) = trace_batch {
            if i % every == 0 || i == iterations {
                let avg = average_point(d, &sum, i)?;
                let obj = objective_estimate(&avg, tb, ctx)?;
                trace.push(TracePoint { iteration: i, objective: obj.value, clamp_count });
            }
        }
    }
    let point = average_point(d, &sum, iterations)?;
    Ok(SgdOutput { params: point.to_params()?, point, trace, clamp_count })
}

fn average_point(d: usize, sum: &[f64], n: usize) -> Result<ReparamPoint> {
    let v: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut p = ReparamPoint::from_vec(d, &v)?;
    p.b = linalg::symmetrize(&p.b);
    Ok(p)
}

/// Runs `K` independent SGD repetitions concurrently, repetition `k` drawing
/// from `make_source(k)`, and returns all runs with the medoid's index.
pub fn run_repetitions<S, F>(
    repetitions: usize,
    iterations: usize,
    lambda: f64,
    make_source: F,
    psi_k: &HermiteExpansion,
    ctx: &ObjectiveContext,
    dset: &ProjectionSet,
    trace_batch: Option<&WeightedBatch>,
) -> Result<(Vec<SgdOutput>, usize)>
where
    S: SampleSource,
    F: Fn(usize) -> Result<S> + Sync,
{
    let runs: Vec<SgdOutput> = (0..repetitions)
        .into_par_iter()
        .map(|k| {
            let mut src = make_source(k)?;
            sgd_run(iterations, lambda, &mut src, psi_k, ctx, dset, trace_batch)
        })
        .collect::<Result<_>>()?;
    let params: Vec<GaussianParams> = runs.iter().map(|r| r.params.clone()).collect();
    let idx = medoid_index(&params)?;
    Ok((runs, idx))
}

/// Seeds for the repetitions of one SGD stage.
pub fn repetition_seeds(seed: u64, stage: u32) -> SeedTree {
    SeedTree::new(seed).stage(stage)
}

fn param_vector(p: &GaussianParams) -> Vec<f64> {
    p.mean().iter().chain(p.covariance().iter()).copied().collect()
}

/// Index of the run whose median distance to the other runs is smallest;
/// ties go to the lowest index.
pub fn medoid_index(runs: &[GaussianParams]) -> Result<usize> {
    if runs.is_empty() {
        return Err(Error::invalid("no runs to select from"));
    }
    if runs.len() == 1 {
        return Ok(0);
    }
    let vecs: Vec<Vec<f64>> = runs.iter().map(param_vector).collect();
    let mut best = (f64::INFINITY, 0);
    for (i, vi) in vecs.iter().enumerate() {
        let dists: Vec<f64> = vecs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, vj)| vi.iter().zip(vj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        let m = crate::stats::median(&dists);
        if m < best.0 {
            best = (m, i);
        }
    }
    Ok(best.1)
}

/// The medoid of the runs.
pub fn median_of_runs(runs: &[GaussianParams]) -> Result<GaussianParams> {
    medoid_index(runs).map(|i| runs[i].clone())
}
