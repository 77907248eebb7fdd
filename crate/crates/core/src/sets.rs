//! Truncation-set families, the two-hypothesis lower-bound construction and
//! noise-sensitivity probes.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianParams;
use crate::region::{check_region_dim, Region};
use crate::stats::{normal_cdf, McEstimate};

/// Maximum degree accepted for polynomial threshold functions.
pub const MAX_PTF_DEGREE: u32 = 6;
/// Largest `d` for which the lower-bound family can be built (`2^d` cells).
pub const MAX_LOWER_BOUND_DIM: usize = 20;

/// `{x : normal · x ≥ offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    fn validate(&self) -> Result<()> {
        if self.normal.is_empty() {
            return Err(Error::invalid("halfspace normal is empty"));
        }
        if self.normal.iter().chain([&self.offset]).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite halfspace parameter"));
        }
        if self.normal.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("halfspace normal is zero"));
        }
        Ok(())
    }

    fn contains_unchecked(&self, x: &[f64]) -> bool {
        self.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= self.offset
    }
}

/// Which of the two mirrored lower-bound sets: `Plus` pairs with `N(e₁, I)`,
/// `Minus` is its reflection in the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Plus,
    Minus,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetKind {
    FullSpace,
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    HalfspaceIntersection {
        halfspaces: Vec<Halfspace>,
    },
    AxisBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `sign · Σ c_V x^V ≥ 0` over monomials `x^V = ∏ x_i^{v_i}`.
    PolynomialThreshold {
        dim: usize,
        terms: Vec<(Vec<u32>, f64)>,
        sign: i8,
    },
    /// A set in ℝ^{d+1}. With `Plus` orientation it is
    /// `[−1+δ, 0] × [−1,1]^d ∪ ⋃_V [0, t_V] × G_V`, where `G_V` is the
    /// orthant cell of `[−1,1]^d` with sign pattern `V`. Cell index bit `i`
    /// is set iff coordinate `i + 1` is negative.
    LowerBoundFamily {
        d: usize,
        thresholds: Vec<f64>,
        delta: f64,
        orientation: Orientation,
    },
}

/// A truncation set with an optional Gaussian surface area bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OracleRepr")]
pub struct SetOracle {
    #[serde(flatten)]
    kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gsa_bound: Option<f64>,
}

#[derive(Deserialize)]
struct OracleRepr {
    #[serde(flatten)]
    kind: SetKind,
    #[serde(default)]
    gsa_bound: Option<f64>,
}

impl TryFrom<OracleRepr> for SetOracle {
    type Error = Error;
    fn try_from(r: OracleRepr) -> Result<Self> {
        let oracle = SetOracle { kind: r.kind, gsa_bound: r.gsa_bound };
        oracle.validate()?;
        Ok(oracle)
    }
}

/// Surface area of a halfspace, used as its bound.
pub fn halfspace_gsa() -> f64 {
    (2.0 / PI).sqrt()
}

impl SetOracle {
    pub fn from_kind(kind: SetKind) -> Result<Self> {
        let gsa_bound = matches!(kind, SetKind::Halfspace { .. }).then(halfspace_gsa);
        let oracle = SetOracle { kind, gsa_bound };
        oracle.validate()?;
        Ok(oracle)
    }

    pub fn full_space() -> Self {
        SetOracle { kind: SetKind::FullSpace, gsa_bound: Some(0.0) }
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Self::from_kind(SetKind::Halfspace { normal, offset })
    }

    pub fn halfspace_intersection(halfspaces: Vec<Halfspace>) -> Result<Self> {
        Self::from_kind(SetKind::HalfspaceIntersection { halfspaces })
    }

    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::from_kind(SetKind::AxisBox { lo, hi })
    }

    pub fn polynomial_threshold(dim: usize, terms: Vec<(Vec<u32>, f64)>, sign: i8) -> Result<Self> {
        Self::from_kind(SetKind::PolynomialThreshold { dim, terms, sign })
    }

    pub fn lower_bound_family(thresholds: Vec<f64>, delta: f64, orientation: Orientation) -> Result<Self> {
        let d = thresholds.len().trailing_zeros() as usize;
        Self::from_kind(SetKind::LowerBoundFamily { d, thresholds, delta, orientation })
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn gsa_bound(&self) -> Option<f64> {
        self.gsa_bound
    }

    pub fn with_gsa_bound(mut self, bound: f64) -> Result<Self> {
        self.gsa_bound = Some(bound);
        self.validate()?;
        Ok(self)
    }

    /// Qualitative surface-area class of the family, for reporting.
    pub fn gsa_class(&self) -> String {
        match &self.kind {
            SetKind::FullSpace => "0".into(),
            SetKind::Halfspace { .. } => "sqrt(2/pi)".into(),
            SetKind::HalfspaceIntersection { halfspaces } => format!("O(sqrt(log {}))", halfspaces.len()),
            SetKind::AxisBox { lo, .. } => format!("O(sqrt(log {}))", 2 * lo.len()),
            SetKind::PolynomialThreshold { terms, .. } => {
                let deg = terms.iter().map(|(v, _)| v.iter().sum::<u32>()).max().unwrap_or(0);
                format!("O({deg})")
            }
            SetKind::LowerBoundFamily { d, .. } => format!("O({}^(1/4))", d + 1),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(g) = self.gsa_bound {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::invalid("gsa_bound must be finite and non-negative"));
            }
            if matches!(self.kind, SetKind::Halfspace { .. }) && (g - halfspace_gsa()).abs() > 1e-12 {
                return Err(Error::invalid("halfspace gsa_bound must equal sqrt(2/pi)"));
            }
        }
        match &self.kind {
            SetKind::FullSpace => Ok(()),
            SetKind::Halfspace { normal, offset } => Halfspace { normal: normal.clone(), offset: *offset }.validate(),
            SetKind::HalfspaceIntersection { halfspaces } => {
                let first = halfspaces.first().ok_or_else(|| Error::invalid("empty halfspace list"))?;
                for h in halfspaces {
                    h.validate()?;
                    check_dim(first.normal.len(), h.normal.len())?;
                }
                Ok(())
            }
            SetKind::AxisBox { lo, hi } => {
                check_dim(lo.len(), hi.len())?;
                if lo.is_empty() {
                    return Err(Error::invalid("box has dimension 0"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || l.is_nan() || h.is_nan()) {
                    return Err(Error::invalid("box requires lo <= hi componentwise"));
                }
                Ok(())
            }
            SetKind::PolynomialThreshold { dim, terms, sign } => {
                if *dim == 0 {
                    return Err(Error::invalid("polynomial dimension is 0"));
                }
                if *sign != 1 && *sign != -1 {
                    return Err(Error::invalid("polynomial sign must be 1 or -1"));
                }
                for (v, c) in terms {
                    check_dim(*dim, v.len())?;
                    if v.iter().sum::<u32>() > MAX_PTF_DEGREE {
                        return Err(Error::invalid(format!("polynomial degree exceeds {MAX_PTF_DEGREE}")));
                    }
                    if !c.is_finite() {
                        return Err(Error::invalid("non-finite polynomial coefficient"));
                    }
                }
                Ok(())
            }
            SetKind::LowerBoundFamily { d, thresholds, delta, .. } => {
                if *d == 0 || *d > MAX_LOWER_BOUND_DIM {
                    return Err(Error::SizeLimit(format!("lower-bound dimension must be in 1..={MAX_LOWER_BOUND_DIM}, got {d}")));
                }
                check_dim(1 << d, thresholds.len())?;
                if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(Error::invalid("thresholds must lie in [0, 1]"));
                }
                if !(-1.0..=1.0).contains(delta) {
                    return Err(Error::invalid("delta must lie in [-1, 1]"));
                }
                Ok(())
            }
        }
    }

    /// Ambient dimension, `None` for the full space.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            SetKind::FullSpace => None,
            SetKind::Halfspace { normal, .. } => Some(normal.len()),
            SetKind::HalfspaceIntersection { halfspaces } => Some(halfspaces[0].normal.len()),
            SetKind::AxisBox { lo, .. } => Some(lo.len()),
            SetKind::PolynomialThreshold { dim, .. } => Some(*dim),
            SetKind::LowerBoundFamily { d, .. } => Some(d + 1),
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if let Some(d) = self.dim() {
            check_dim(d, x.len())?;
        }
        Ok(self.contains_unchecked(x))
    }

    fn contains_unchecked(&self, x: &[f64]) -> bool {
        match &self.kind {
            SetKind::FullSpace => true,
            SetKind::Halfspace { normal, offset } => normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= *offset,
            SetKind::HalfspaceIntersection { halfspaces } => halfspaces.iter().all(|h| h.contains_unchecked(x)),
            SetKind::AxisBox { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| l <= v && v <= h),
            SetKind::PolynomialThreshold { terms, sign, .. } => {
                let p: f64 = terms.iter().map(|(v, c)| c * v.iter().zip(x).map(|(&e, xi)| xi.powi(e as i32)).product::<f64>()).sum();
                f64::from(*sign) * p >= 0.0
            }
            SetKind::LowerBoundFamily { thresholds, delta, orientation, .. } => {
                let x1 = orientation.sign() * x[0];
                let mut cell = 0usize;
                for (i, &y) in x[1..].iter().enumerate() {
                    if !(y.abs() <= 1.0) {
                        return false;
                    }
                    if y < 0.0 {
                        cell |= 1 << i;
                    }
                }
                (-1.0 + delta <= x1 && x1 <= 0.0) || (0.0 <= x1 && x1 <= thresholds[cell])
            }
        }
    }

    /// Reflection of a lower-bound set in the first coordinate.
    pub fn mirrored(&self) -> Result<Self> {
        match &self.kind {
            SetKind::LowerBoundFamily { d, thresholds, delta, orientation } => Ok(SetOracle {
                kind: SetKind::LowerBoundFamily {
                    d: *d,
                    thresholds: thresholds.clone(),
                    delta: *delta,
                    orientation: match orientation {
                        Orientation::Plus => Orientation::Minus,
                        Orientation::Minus => Orientation::Plus,
                    },
                },
                gsa_bound: self.gsa_bound,
            }),
            _ => Err(Error::invalid("only lower-bound sets can be mirrored")),
        }
    }

    /// Closed-form Gaussian mass where one is available: full space,
    /// halfspaces, boxes under diagonal covariance, and lower-bound sets
    /// under identity covariance.
    pub fn exact_mass(&self, params: &GaussianParams) -> Option<f64> {
        let d = params.dim();
        if self.dim().is_some_and(|sd| sd != d) {
            return None;
        }
        let mu = params.mean();
        let cov = params.covariance();
        match &self.kind {
            SetKind::FullSpace => Some(1.0),
            SetKind::Halfspace { normal, offset } => {
                let n = nalgebra::DVector::from_column_slice(normal);
                let m = n.dot(mu);
                let s = (n.transpose() * cov * &n)[(0, 0)].sqrt();
                Some(normal_cdf((m - offset) / s))
            }
            SetKind::AxisBox { lo, hi } if params.is_diagonal() => Some(
                (0..d)
                    .map(|i| {
                        let s = cov[(i, i)].sqrt();
                        normal_cdf((hi[i] - mu[i]) / s) - normal_cdf((lo[i] - mu[i]) / s)
                    })
                    .product(),
            ),
            SetKind::LowerBoundFamily { d: dd, thresholds, delta, orientation } => {
                let identity = params.is_diagonal() && (0..d).all(|i| cov[(i, i)] == 1.0);
                if !identity {
                    return None;
                }
                let m1 = orientation.sign() * mu[0];
                let mut cells = vec![1.0f64; thresholds.len()];
                let mut cube = 1.0;
                for i in 0..*dd {
                    let pos = normal_cdf(1.0 - mu[i + 1]) - normal_cdf(-mu[i + 1]);
                    let neg = normal_cdf(-mu[i + 1]) - normal_cdf(-1.0 - mu[i + 1]);
                    cube *= pos + neg;
                    for (c, w) in cells.iter_mut().enumerate() {
                        *w *= if c >> i & 1 == 1 { neg } else { pos };
                    }
                }
                let left = cube * (normal_cdf(-m1) - normal_cdf(-1.0 + delta - m1));
                let right: f64 = cells.iter().zip(thresholds).map(|(w, &t)| w * (normal_cdf(t - m1) - normal_cdf(-m1))).sum();
                Some(left + right)
            }
            _ => None,
        }
    }
}

impl Region for SetOracle {
    fn dim(&self) -> Option<usize> {
        SetOracle::dim(self)
    }

    fn contains(&self, x: &[f64]) -> Result<bool> {
        SetOracle::contains(self, x)
    }
}

/// Target mass `c = ∫_H min(N(e₁,I), N(−e₁,I))` over the cube `H = [−1,1]^{d+1}`.
pub fn lower_bound_target_mass(d: usize) -> f64 {
    let q = normal_cdf(1.0) - normal_cdf(-1.0);
    2.0 * (normal_cdf(-1.0) - normal_cdf(-2.0)) * q.powi(d as i32)
}

/// Inverse-CDF draw from `F(t) = 1 − e^{−2t}` on `[0, 1)` with the remaining
/// mass `e^{−2}` placed at 1.
pub fn sample_threshold<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if u >= 1.0 - (-2.0f64).exp() {
        1.0
    } else {
        -(-u).ln_1p() / 2.0
    }
}

/// Chooses `δ` so that the `Plus` set built from `thresholds` has mass
/// `target` under `N(e₁, I)`. Clamps to `±1` when the target is out of reach.
pub fn calibrate_delta(thresholds: &[f64], target: f64) -> Result<f64> {
    let d = thresholds.len().trailing_zeros() as usize;
    let e1 = {
        let mut m = vec![0.0; d + 1];
        m[0] = 1.0;
        GaussianParams::isotropic(&m, 1.0)?
    };
    let mass = |delta: f64| -> Result<f64> {
        let s = SetOracle::lower_bound_family(thresholds.to_vec(), delta, Orientation::Plus)?;
        Ok(s.exact_mass(&e1).expect("identity covariance"))
    };
    // mass is decreasing in delta
    let (mut lo, mut hi) = (-1.0, 1.0);
    if mass(lo)? <= target {
        return Ok(lo);
    }
    if mass(hi)? >= target {
        return Ok(hi);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mass(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws a random `Plus` lower-bound set in ℝ^{d+1} with calibrated `δ`.
pub fn build_lower_bound_set<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SetOracle> {
    if d == 0 {
        return Err(Error::invalid("d must be at least 1"));
    }
    if d > MAX_LOWER_BOUND_DIM {
        return Err(Error::SizeLimit(format!("2^{d} thresholds exceeds the limit of 2^{MAX_LOWER_BOUND_DIM}")));
    }
    let thresholds: Vec<f64> = (0..1usize << d).map(|_| sample_threshold(rng)).collect();
    let delta = calibrate_delta(&thresholds, lower_bound_target_mass(d))?;
    SetOracle::lower_bound_family(thresholds, delta, Orientation::Plus)
}

/// A pair of standard normal vectors with per-coordinate correlation `1 − ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedPair {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub rho: f64,
}

impl CorrelatedPair {
    pub fn sample<R: Rng + ?Sized>(dim: usize, rho: f64, rng: &mut R) -> Result<Self> {
        check_rho(rho)?;
        let mut pair = CorrelatedPair { x: vec![0.0; dim], z: vec![0.0; dim], rho };
        fill_pair(&mut pair.x, &mut pair.z, rho, rng);
        Ok(pair)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")))
    }
}

fn fill_pair<R: Rng + ?Sized>(x: &mut [f64], z: &mut [f64], rho: f64, rng: &mut R) {
    let r = 1.0 - rho;
    let s = (1.0 - r * r).sqrt();
    for (xi, zi) in x.iter_mut().zip(z.iter_mut()) {
        *xi = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        *zi = r * *xi + s * y;
    }
}

/// Monte Carlo estimate of `2 E[1_S(x) 1_{S^c}(z)]` over correlated pairs.
pub fn noise_sensitivity<S: Region + ?Sized, R: Rng + ?Sized>(set: &S, dim: usize, rho: f64, rng: &mut R, n: usize) -> Result<McEstimate> {
    check_rho(rho)?;
    check_region_dim(set, dim)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let (mut x, mut z) = (vec![0.0; dim], vec![0.0; dim]);
    let mut hits = 0usize;
    for _ in 0..n {
        fill_pair(&mut x, &mut z, rho, rng);
        if set.contains(&x)? && !set.contains(&z)? {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let se = if n > 1 { 2.0 * (p * (1.0 - p) / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(McEstimate { value: 2.0 * p, std_error: se, n })
}
