//! Gaussian densities, exact and rejection sampling, conditional moments,
//! whitening maps and parameter-distance bounds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, SYMMETRY_TOL};
use crate::region::{check_region_dim, Region};
use crate::stats::{McEstimate, Welford};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean and full-rank covariance of a multivariate Gaussian.
///
/// The Cholesky factor and log-determinant are cached at construction so
/// density evaluation is a triangular solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct GaussianParams {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<ParamsRepr> for GaussianParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        GaussianParams::new(DVector::from_vec(r.mean), linalg::matrix_from_rows(&r.covariance)?)
    }
}

impl From<GaussianParams> for ParamsRepr {
    fn from(p: GaussianParams) -> Self {
        ParamsRepr { mean: p.mean.iter().copied().collect(), covariance: linalg::matrix_to_rows(&p.cov) }
    }
}

impl PartialEq for GaussianParams {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite mean or covariance entry"));
        }
        if !linalg::is_symmetric(&cov, SYMMETRY_TOL) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let cov = linalg::symmetrize(&cov);
        let chol =
            nalgebra::Cholesky::new(cov.clone()).ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { mean, cov, chol: l, log_det })
    }

    pub fn from_slices(mean: &[f64], cov_rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(DVector::from_column_slice(mean), linalg::matrix_from_rows(cov_rows)?)
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity covariance is valid")
    }

    pub fn isotropic(mean: &[f64], variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), DMatrix::identity(d, d) * variance)
    }

    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Result<Self> {
        check_dim(mean.len(), variances.len())?;
        Self::new(DVector::from_column_slice(mean), DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn precision(&self) -> DMatrix<f64> {
        linalg::spd_inverse(&self.cov).expect("covariance validated at construction")
    }

    /// True when the covariance has no off-diagonal entries.
    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.cov[(i, j)] == 0.0))
    }

    /// Log of the density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite point"));
        }
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        // forward substitution L z = x - mean
        let mut quad = 0.0;
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * z[j];
            }
            z[i] = s / self.chol[(i, i)];
            quad += z[i] * z[i];
        }
        -0.5 * (d as f64 * LN_2PI + self.log_det + quad)
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    /// Writes one draw into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut s = self.mean[i];
            for j in 0..=i {
                s += self.chol[(i, j)] * z[j];
            }
            out[i] = s;
        }
    }

    /// `n` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> SampleBatch {
        let d = self.dim();
        let mut data = vec![0.0; n * d];
        for row in data.chunks_exact_mut(d) {
            self.sample_into(rng, row);
        }
        SampleBatch::from_flat(d, data).expect("buffer sized to dimension")
    }
}

/// Log density of the standard normal in `x.len()` dimensions.
pub fn standard_log_density(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    -0.5 * (sq + x.len() as f64 * LN_2PI)
}

/// Log density of a Gaussian.
pub fn log_density(params: &GaussianParams, x: &[f64]) -> Result<f64> {
    params.log_density(x)
}

/// A Gaussian conditioned on a set.
#[derive(Debug, Clone)]
pub struct TruncatedGaussian<R> {
    pub params: GaussianParams,
    pub set: R,
    alpha_hat: Option<f64>,
}

impl<R: Region> TruncatedGaussian<R> {
    pub fn new(params: GaussianParams, set: R) -> Result<Self> {
        check_region_dim(&set, params.dim())?;
        Ok(Self { params, set, alpha_hat: None })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        self.alpha_hat = Some(alpha);
        Ok(self)
    }

    pub fn alpha_hat(&self) -> Option<f64> {
        self.alpha_hat
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// Log density of the truncated law given its mass `alpha`; `-inf`
    /// outside the set.
    pub fn log_density_with_mass(&self, x: &[f64], alpha: f64) -> Result<f64> {
        if self.set.contains(x)? {
            Ok(self.params.log_density(x)? - alpha.ln())
        } else {
            Ok(f64::NEG_INFINITY)
        }
    }
}

/// Default rejection budget per accepted point: `max(10³, 10/α)`.
pub fn default_max_attempts(alpha_config: f64) -> usize {
    let by_alpha = if alpha_config > 0.0 { (10.0 / alpha_config).ceil() } else { f64::INFINITY };
    by_alpha.max(1e3).min(1e9) as usize
}

/// Output of rejection sampling.
#[derive(Debug, Clone)]
pub struct TruncatedSample {
    pub batch: SampleBatch,
    /// accepted / proposed, an estimate of the set's mass.
    pub acceptance_rate: f64,
    pub proposals: u64,
}

/// Draws `n` points from `tg` by rejection against its set.
pub fn truncated_sample<R: Region, G: Rng + ?Sized>(
    tg: &TruncatedGaussian<R>,
    rng: &mut G,
    n: usize,
    max_attempts_per_sample: usize,
) -> Result<TruncatedSample> {
    if n == 0 || max_attempts_per_sample == 0 {
        return Err(Error::invalid("n and max_attempts_per_sample must be at least 1"));
    }
    let d = tg.dim();
    let mut batch = SampleBatch::with_capacity(d, n);
    let mut x = vec![0.0; d];
    let mut proposals: u64 = 0;
    for accepted in 0..n {
        let mut tries = 0usize;
        loop {
            if tries == max_attempts_per_sample {
                return Err(Error::LowMass {
                    acceptance_estimate: accepted as f64 / proposals.max(1) as f64,
                    max_attempts: max_attempts_per_sample,
                });
            }
            tg.params.sample_into(rng, &mut x);
            tries += 1;
            proposals += 1;
            if tg.set.contains(&x)? {
                batch.push(&x)?;
                break;
            }
        }
    }
    Ok(TruncatedSample { batch, acceptance_rate: n as f64 / proposals as f64, proposals })
}

/// Monte Carlo estimate of the Gaussian mass of `set`.
pub fn mass_estimate<R: Region + ?Sized, G: Rng + ?Sized>(params: &GaussianParams, set: &R, rng: &mut G, n: usize) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    check_region_dim(set, params.dim())?;
    let mut x = vec![0.0; params.dim()];
    let mut hits = 0usize;
    for _ in 0..n {
        params.sample_into(rng, &mut x);
        if set.contains(&x)? {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let se = if n > 1 { (p * (1.0 - p) / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(McEstimate { value: p, std_error: se, n })
}

/// Empirical mean and unbiased covariance of a batch.
pub fn conditional_moments(samples: &SampleBatch) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = samples.dim();
    let n = samples.len();
    if n < d + 1 {
        return Err(Error::InsufficientData { needed: d + 1, got: n });
    }
    let mut mean = DVector::zeros(d);
    for row in samples.rows() {
        for i in 0..d {
            mean[i] += row[i];
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for row in samples.rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// The affine map `y = A (x - c)` and its inverse `x = A⁻¹ y + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub center: DVector<f64>,
}

impl AffineMap {
    pub fn identity(d: usize) -> Self {
        Self { matrix: DMatrix::identity(d, d), inverse: DMatrix::identity(d, d), center: DVector::zeros(d) }
    }

    pub fn translation(center: DVector<f64>) -> Self {
        let d = center.len();
        Self { matrix: DMatrix::identity(d, d), inverse: DMatrix::identity(d, d), center }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.matrix[(i, j)] * (x[j] - self.center[j]);
            }
            out[i] = s;
        }
    }

    pub fn apply_inverse(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = self.center[i];
            for j in 0..d {
                s += self.inverse[(i, j)] * y[j];
            }
            out[i] = s;
        }
    }

    pub fn apply_batch(&self, batch: &SampleBatch) -> Result<SampleBatch> {
        check_dim(self.dim(), batch.dim())?;
        Ok(batch.map_rows(self.dim(), |x, y| self.apply(x, y)))
    }

    /// Law of `A (X - c)` for `X ~ params`.
    pub fn push_forward(&self, params: &GaussianParams) -> Result<GaussianParams> {
        check_dim(self.dim(), params.dim())?;
        let mean = &self.matrix * (params.mean() - &self.center);
        let cov = &self.matrix * params.covariance() * self.matrix.transpose();
        GaussianParams::new(mean, linalg::symmetrize(&cov))
    }

    /// Law of `A⁻¹ Y + c` for `Y ~ params`.
    pub fn pull_back(&self, params: &GaussianParams) -> Result<GaussianParams> {
        check_dim(self.dim(), params.dim())?;
        let mean = &self.inverse * params.mean() + &self.center;
        let cov = &self.inverse * params.covariance() * self.inverse.transpose();
        GaussianParams::new(mean, linalg::symmetrize(&cov))
    }
}

/// The whitening map `x ↦ Σ^{-1/2}(x − μ)` with the symmetric inverse square
/// root.
pub fn whitening_transform(mu_s: &DVector<f64>, sigma_s: &DMatrix<f64>) -> Result<AffineMap> {
    check_dim(mu_s.len(), sigma_s.nrows())?;
    let eig = linalg::sym_eigen(sigma_s);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Factorization("conditional covariance is not positive definite".into()));
    }
    let matrix = linalg::spectral_map(&eig, |l| 1.0 / l.sqrt());
    let inverse = linalg::spectral_map(&eig, f64::sqrt);
    Ok(AffineMap { matrix, inverse, center: mu_s.clone() })
}

/// `½‖Σ₁^{-1/2}(μ₁−μ₂)‖₂ + √2‖I − Σ₁^{-1/2}Σ₂Σ₁^{-1/2}‖_F`, an upper bound on
/// the total variation between the two untruncated Gaussians.
pub fn tv_parameter_bound(p1: &GaussianParams, p2: &GaussianParams) -> Result<f64> {
    check_dim(p1.dim(), p2.dim())?;
    let w = linalg::sym_inv_sqrt(p1.covariance())?;
    let mean_term = (&w * (p1.mean() - p2.mean())).norm();
    let d = p1.dim();
    let inner = &w * p2.covariance() * &w;
    let cov_term = linalg::frobenius(&(DMatrix::identity(d, d) - inner));
    Ok(0.5 * mean_term + 2f64.sqrt() * cov_term)
}

fn resolve_alpha<R: Region, G: Rng + ?Sized>(tg: &TruncatedGaussian<R>, rng: &mut G, n: usize) -> Result<f64> {
    match tg.alpha_hat() {
        Some(a) => Ok(a),
        None => {
            let est = mass_estimate(&tg.params, &tg.set, rng, n.max(1))?;
            if est.value <= 0.0 {
                return Err(Error::LowMass { acceptance_estimate: 0.0, max_attempts: n });
            }
            Ok(est.value)
        }
    }
}

/// Monte Carlo total variation between two truncated Gaussians.
///
/// Draws half the points from each law and averages
/// `|f₁ − f₂| / (f₁ + f₂)`, whose expectation under the equal mixture is the
/// total variation. Masses that are not attached to the inputs are
/// estimated with `n` extra draws each.
pub fn tv_monte_carlo<R1: Region, R2: Region, G: Rng + ?Sized>(
    tg1: &TruncatedGaussian<R1>,
    tg2: &TruncatedGaussian<R2>,
    rng: &mut G,
    n: usize,
) -> Result<McEstimate> {
    check_dim(tg1.dim(), tg2.dim())?;
    if n < 2 {
        return Err(Error::invalid("n must be at least 2"));
    }
    let a1 = resolve_alpha(tg1, rng, n)?;
    let a2 = resolve_alpha(tg2, rng, n)?;
    let half = n / 2;
    let s1 = truncated_sample(tg1, rng, half, default_max_attempts(a1))?;
    let s2 = truncated_sample(tg2, rng, n - half, default_max_attempts(a2))?;
    let ratio = |x: &[f64]| -> Result<f64> {
        let l1 = tg1.log_density_with_mass(x, a1)?;
        let l2 = tg2.log_density_with_mass(x, a2)?;
        // |f1 - f2| / (f1 + f2) = |tanh((l1 - l2) / 2)|
        let diff = l1 - l2;
        Ok(if diff.is_nan() { 0.0 } else { (0.5 * diff).tanh().abs() })
    };
    let w1: Welford = s1.batch.rows().map(ratio).collect::<Result<Vec<_>>>()?.into_iter().collect();
    let w2: Welford = s2.batch.rows().map(ratio).collect::<Result<Vec<_>>>()?.into_iter().collect();
    let value = 0.5 * (w1.mean() + w2.mean());
    let se = 0.5 * (w1.variance() / w1.count() as f64 + w2.variance() / w2.count() as f64).sqrt();
    Ok(McEstimate { value, std_error: se, n })
}

/// Radii `(a, b)` of near-isotropic position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicCert {
    a: f64,
    b: f64,
}

impl IsotropicCert {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0) || !(0.0..1.0).contains(&b) {
            return Err(Error::invalid(format!("need a >= 0 and 0 <= b < 1, got a={a}, b={b}")));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Eigenvalue band `[1 − b, 1/(1 − b)]`.
    pub fn band(&self) -> (f64, f64) {
        (1.0 - self.b, 1.0 / (1.0 - self.b))
    }
}

/// True iff `‖μ‖² ≤ a`, `‖Σ − I‖_F² ≤ a` and `(1−b)I ⪯ Σ ⪯ I/(1−b)`.
pub fn isotropic_check(params: &GaussianParams, cert: IsotropicCert) -> bool {
    isotropic_check_raw(params.mean(), params.covariance(), cert)
}

pub(crate) fn isotropic_check_raw(mean: &DVector<f64>, cov: &DMatrix<f64>, cert: IsotropicCert) -> bool {
    let d = mean.len();
    if mean.norm_squared() > cert.a {
        return false;
    }
    let dev = linalg::frobenius(&(cov - DMatrix::identity(d, d)));
    if dev * dev > cert.a {
        return false;
    }
    let (lo, hi) = cert.band();
    let (emin, emax) = linalg::min_max_eigen(cov);
    emin >= lo && emax <= hi
}
