//! Normalized probabilists' Hermite polynomials and finite Hermite expansions.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Largest number of multi-indices an expansion may hold.
pub const MAX_BASIS_SIZE: u64 = 1 << 31;

/// `He_n(x)/√(n!)`, computed with the normalized three-term recurrence.
pub fn hermite_1d(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for m in 0..n {
        let next = (x * cur - (m as f64).sqrt() * prev) / ((m + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Writes `H_0(x), …, H_k(x)` into `out[..=k]`.
pub fn hermite_table(k: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if k == 0 {
        return;
    }
    out[1] = x;
    for m in 1..k {
        out[m + 1] = (x * out[m] - (m as f64).sqrt() * out[m - 1]) / ((m + 1) as f64).sqrt();
    }
}

/// Exponent vector `V ∈ ℕ^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn zero(d: usize) -> Self {
        Self(vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }
}

/// `∏ᵢ H_{vᵢ}(xᵢ)`.
pub fn hermite_multi(v: &MultiIndex, x: &[f64]) -> Result<f64> {
    check_dim(v.dim(), x.len())?;
    Ok(v.0.iter().zip(x).map(|(&n, &xi)| hermite_1d(n as usize, xi)).product())
}

/// `binom(d + k, k)`, or a size error past the basis limit.
pub fn multi_index_count(d: usize, k: usize) -> Result<usize> {
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = c * (d as u128 + i) / i;
        if c > MAX_BASIS_SIZE as u128 {
            return Err(Error::SizeLimit(format!("binom({}, {k}) multi-indices exceed 2^31", d + k)));
        }
    }
    Ok(c as usize)
}

/// All `V` with `|V| ≤ k`, by increasing degree and, within a degree, in
/// descending lexicographic order: `d=2, k=1` gives `(0,0), (1,0), (0,1)`.
pub fn enumerate_multi_indices(d: usize, k: usize) -> Result<Vec<MultiIndex>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let count = multi_index_count(d, k)?;
    let mut out = Vec::with_capacity(count);
    let mut cur = vec![0u32; d];
    for g in 0..=k as u32 {
        compositions(&mut cur, 0, g, &mut out);
    }
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

fn compositions(cur: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.to_vec()));
        return;
    }
    for v in (0..=remaining).rev() {
        cur[pos] = v;
        compositions(cur, pos + 1, remaining - v, out);
    }
}

/// The multi-indices of total degree at most `k` in `d` variables, stored
/// flat for fast evaluation of all basis functions at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteBasis {
    dim: usize,
    max_degree: usize,
    flat: Vec<u32>,
}

impl HermiteBasis {
    pub fn new(dim: usize, max_degree: usize) -> Result<Self> {
        let indices = enumerate_multi_indices(dim, max_degree)?;
        let flat = indices.into_iter().flat_map(|v| v.0).collect();
        Ok(Self { dim, max_degree, flat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn index(&self, i: usize) -> MultiIndex {
        MultiIndex(self.flat[i * self.dim..(i + 1) * self.dim].to_vec())
    }

    pub fn indices(&self) -> impl Iterator<Item = &[u32]> {
        self.flat.chunks_exact(self.dim)
    }

    pub fn position(&self, v: &MultiIndex) -> Option<usize> {
        if v.dim() != self.dim {
            return None;
        }
        self.indices().position(|w| w == v.entries())
    }

    /// Evaluates every basis function at `x`. `table` is scratch space of
    /// length `dim · (max_degree + 1)`; `out` has length `self.len()`.
    pub fn eval_all(&self, x: &[f64], table: &mut [f64], out: &mut [f64]) {
        let stride = self.max_degree + 1;
        for (i, &xi) in x.iter().enumerate() {
            hermite_table(self.max_degree, xi, &mut table[i * stride..(i + 1) * stride]);
        }
        for (o, v) in out.iter_mut().zip(self.flat.chunks_exact(self.dim)) {
            let mut p = 1.0;
            for (i, &n) in v.iter().enumerate() {
                if n != 0 {
                    p *= table[i * stride + n as usize];
                }
            }
            *o = p;
        }
    }

    pub fn scratch_len(&self) -> usize {
        self.dim * (self.max_degree + 1)
    }
}

/// `Σ_V c_V H_V` over all `|V| ≤ k`, coefficients in enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpansionRepr", into = "ExpansionRepr")]
pub struct HermiteExpansion {
    basis: HermiteBasis,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ExpansionRepr {
    dim: usize,
    max_degree: usize,
    coeffs: Vec<(MultiIndex, f64)>,
}

impl TryFrom<ExpansionRepr> for HermiteExpansion {
    type Error = Error;
    fn try_from(r: ExpansionRepr) -> Result<Self> {
        let mut e = HermiteExpansion::zeros(r.dim, r.max_degree)?;
        for (v, c) in r.coeffs {
            let pos = e
                .basis
                .position(&v)
                .ok_or_else(|| Error::Format(format!("multi-index {:?} not in the degree-{} basis", v.0, r.max_degree)))?;
            e.coeffs[pos] = c;
        }
        Ok(e)
    }
}

impl From<HermiteExpansion> for ExpansionRepr {
    fn from(e: HermiteExpansion) -> Self {
        let coeffs = (0..e.coeffs.len()).map(|i| (e.basis.index(i), e.coeffs[i])).collect();
        ExpansionRepr { dim: e.basis.dim, max_degree: e.basis.max_degree, coeffs }
    }
}

impl HermiteExpansion {
    pub fn zeros(dim: usize, max_degree: usize) -> Result<Self> {
        let basis = HermiteBasis::new(dim, max_degree)?;
        let coeffs = vec![0.0; basis.len()];
        Ok(Self { basis, coeffs })
    }

    pub fn from_coeffs(dim: usize, max_degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let basis = HermiteBasis::new(dim, max_degree)?;
        check_dim(basis.len(), coeffs.len())?;
        Ok(Self { basis, coeffs })
    }

    /// The constant function `c`.
    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        Self::from_coeffs(dim, 0, vec![c])
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn max_degree(&self) -> usize {
        self.basis.max_degree
    }

    pub fn basis(&self) -> &HermiteBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, v: &MultiIndex) -> Option<f64> {
        self.basis.position(v).map(|i| self.coeffs[i])
    }

    pub fn set_coeff(&mut self, v: &MultiIndex, c: f64) -> Result<()> {
        let i = self.basis.position(v).ok_or_else(|| Error::invalid(format!("multi-index {:?} not in basis", v.0)))?;
        self.coeffs[i] = c;
        Ok(())
    }

    /// `Σ c_V²`.
    pub fn squared_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Keeps the terms of degree at most `k`.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        let k = k.min(self.max_degree());
        let n = multi_index_count(self.dim(), k)?;
        Self::from_coeffs(self.dim(), k, self.coeffs[..n].to_vec())
    }

    /// Unclamped value `Σ c_V H_V(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut table = vec![0.0; self.basis.scratch_len()];
        let mut vals = vec![0.0; self.basis.len()];
        Ok(self.eval_with(x, &mut table, &mut vals))
    }

    pub(crate) fn eval_with(&self, x: &[f64], table: &mut [f64], vals: &mut [f64]) -> f64 {
        self.basis.eval_all(x, table, vals);
        vals.iter().zip(&self.coeffs).map(|(h, c)| h * c).sum()
    }

    /// `max(0, Σ c_V H_V(x))`.
    pub fn eval_clamped(&self, x: &[f64]) -> Result<f64> {
        self.eval(x).map(|v| v.max(0.0))
    }

    /// A reusable evaluator that avoids per-call allocation.
    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator { exp: self, table: vec![0.0; self.basis.scratch_len()], vals: vec![0.0; self.basis.len()] }
    }
}

/// Evaluates an expansion at many points with preallocated scratch.
pub struct Evaluator<'a> {
    exp: &'a HermiteExpansion,
    table: Vec<f64>,
    vals: Vec<f64>,
}

impl Evaluator<'_> {
    pub fn eval(&mut self, x: &[f64]) -> f64 {
        self.exp.eval_with(x, &mut self.table, &mut self.vals)
    }

    pub fn eval_clamped(&mut self, x: &[f64]) -> f64 {
        self.eval(x).max(0.0)
    }
}

/// Applies the Gaussian noise operator: each `c_V` is scaled by `ρ^{|V|}`.
pub fn noise_operator_apply(expansion: &HermiteExpansion, rho: f64) -> Result<HermiteExpansion> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    let mut out = expansion.clone();
    let d = expansion.dim();
    for (c, v) in out.coeffs.iter_mut().zip(expansion.basis.flat.chunks_exact(d)) {
        *c *= rho.powi(v.iter().sum::<u32>() as i32);
    }
    Ok(out)
}
