//! Set recovery by thresholding `N₀/N̂ · ψ_k` at one half.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{standard_log_density, AffineMap, GaussianParams};
use crate::hermite::HermiteExpansion;
use crate::optimizer::LOG_WEIGHT_CLAMP;
use crate::region::{check_region_dim, Region};
use crate::stats::McEstimate;

/// `{x : N₀(x)/N̂(x) · ψ_k(x) > ½}`, with `ψ_k` and `N̂` living in the
/// working coordinates reached through `map` when one is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredSet {
    pub psi_k: HermiteExpansion,
    pub est_params: GaussianParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<AffineMap>,
}

impl RecoveredSet {
    pub fn new(psi_k: HermiteExpansion, est_params: GaussianParams) -> Result<Self> {
        check_dim(psi_k.dim(), est_params.dim())?;
        Ok(Self { psi_k, est_params, map: None })
    }

    /// Accepts points in original coordinates and maps them with `map`
    /// before evaluation.
    pub fn with_map(mut self, map: AffineMap) -> Result<Self> {
        check_dim(self.psi_k.dim(), map.dim())?;
        self.map = Some(map);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.psi_k.dim()
    }

    /// `exp(log N₀(y) − log N̂(y)) · ψ_k(y)` at the working-coordinate image
    /// `y` of `x`.
    pub fn weighted_indicator(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite point"));
        }
        let mut y = x.to_vec();
        if let Some(m) = &self.map {
            m.apply(x, &mut y);
        }
        let psi = self.psi_k.eval_clamped(&y)?;
        if psi == 0.0 {
            return Ok(0.0);
        }
        let log_ratio = (standard_log_density(&y) - self.est_params.log_density(&y)?).min(LOG_WEIGHT_CLAMP);
        Ok(log_ratio.exp() * psi)
    }

    /// Strictly above one half; the boundary is outside.
    pub fn classify(&self, x: &[f64]) -> Result<bool> {
        self.weighted_indicator(x).map(|v| v > 0.5)
    }
}

impl Region for RecoveredSet {
    fn dim(&self) -> Option<usize> {
        Some(RecoveredSet::dim(self))
    }

    fn contains(&self, x: &[f64]) -> Result<bool> {
        self.classify(x)
    }
}

/// Monte Carlo estimate of `P_{x∼N(μ*,Σ*)}[recovered(x) ≠ truth(x)]`.
pub fn symdiff_mass<A: Region + ?Sized, B: Region + ?Sized, R: Rng + ?Sized>(
    recovered: &A,
    truth: &B,
    true_params: &GaussianParams,
    rng: &mut R,
    n: usize,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let d = true_params.dim();
    check_region_dim(recovered, d)?;
    check_region_dim(truth, d)?;
    let mut x = vec![0.0; d];
    let mut miss = 0usize;
    for _ in 0..n {
        true_params.sample_into(rng, &mut x);
        if recovered.contains(&x)? != truth.contains(&x)? {
            miss += 1;
        }
    }
    let p = miss as f64 / n as f64;
    let se = if n > 1 { (p * (1.0 - p) / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(McEstimate { value: p, std_error: se, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::PsiTarget;
    use crate::rng::substream;
    use crate::sets::SetOracle;

    /// A region given by the exact `ψ` of a target.
    struct ExactPsiSet {
        target: PsiTarget,
        est: GaussianParams,
    }

    impl Region for ExactPsiSet {
        fn dim(&self) -> Option<usize> {
            Some(self.target.dim())
        }
        fn contains(&self, x: &[f64]) -> Result<bool> {
            let r = (standard_log_density(x) - self.est.log_density(x)?).exp();
            Ok(r * self.target.psi(x)? > 0.5)
        }
    }

    #[test]
    fn weighted_indicator_examples() {
        let one = RecoveredSet::new(HermiteExpansion::constant(2, 1.0).unwrap(), GaussianParams::standard(2)).unwrap();
        for x in [[0.0, 0.0], [3.0, -1.0], [-10.0, 4.0]] {
            assert!((one.weighted_indicator(&x).unwrap() - 1.0).abs() < 1e-12);
        }
        let zero = RecoveredSet::new(HermiteExpansion::constant(1, -1.0).unwrap(), GaussianParams::standard(1)).unwrap();
        assert_eq!(zero.weighted_indicator(&[0.3]).unwrap(), 0.0);
        let two = RecoveredSet::new(HermiteExpansion::constant(1, 2.0).unwrap(), GaussianParams::standard(1)).unwrap();
        assert!((two.weighted_indicator(&[0.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_is_strict() {
        let rs = |c: f64| RecoveredSet::new(HermiteExpansion::constant(1, c).unwrap(), GaussianParams::standard(1)).unwrap();
        assert!(rs(0.6).classify(&[0.2]).unwrap());
        assert!(!rs(0.4).classify(&[0.2]).unwrap());
        assert!(!rs(0.5).classify(&[0.2]).unwrap());
    }

    #[test]
    fn map_is_applied_before_evaluation() {
        // ψ_k = 1 + y with y = x − 2: inside iff x > 1.5
        let psi = HermiteExpansion::from_coeffs(1, 1, vec![1.0, 1.0]).unwrap();
        let map = AffineMap::translation(nalgebra::DVector::from_vec(vec![2.0]));
        let rs = RecoveredSet::new(psi, GaussianParams::standard(1)).unwrap().with_map(map).unwrap();
        assert!(rs.classify(&[1.6]).unwrap());
        assert!(!rs.classify(&[1.4]).unwrap());
        let json = serde_json::to_string(&rs).unwrap();
        let back: RecoveredSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rs);
    }

    #[test]
    fn symdiff_examples() {
        let mut rng = substream(1, 0, 0);
        let std2 = GaussianParams::standard(2);
        let full = RecoveredSet::new(HermiteExpansion::constant(2, 1.0).unwrap(), std2.clone()).unwrap();
        let m = symdiff_mass(&full, &SetOracle::full_space(), &std2, &mut rng, 10_000).unwrap();
        assert_eq!(m.value, 0.0);

        let h = SetOracle::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let flipped = SetOracle::halfspace(vec![-1.0, 0.0], 0.0).unwrap();
        let m = symdiff_mass(&flipped, &h, &std2, &mut rng, 10_000).unwrap();
        assert!(m.value > 0.999);
    }

    #[test]
    fn exact_psi_recovers_the_set() {
        let params = GaussianParams::from_slices(&[0.1, 0.78], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let set = SetOracle::halfspace(vec![0.38, -0.46], -0.2).unwrap();
        let target = PsiTarget::with_estimated_mass(params.clone(), set.clone(), &mut substream(0, 0, 0), 1).unwrap();
        let exact = ExactPsiSet { target, est: params.clone() };
        let m = symdiff_mass(&exact, &set, &params, &mut substream(2, 0, 0), 10_000).unwrap();
        assert_eq!(m.value, 0.0);
    }
}
