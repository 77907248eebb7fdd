//! JSON configuration documents for each command.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use truncgauss::optimizer::SgdConfig;
use truncgauss::pipeline::{PipelineConfig, Whitening};
use truncgauss::sets::SetOracle;
use truncgauss::GaussianParams;

use crate::error::{CliError, CliResult};
use crate::overrides::{self, Override};

/// Reads a JSON config, applies overrides and the `--seed` flag, then
/// deserializes it.
pub fn load<T: DeserializeOwned>(path: &Path, overrides: &[Override], seed: Option<u64>) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    overrides::apply(&mut value, overrides)?;
    if let Some(s) = seed {
        overrides::set_path(&mut value, "seed", s.into())?;
    }
    serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::config("a seed is required (set `seed` in the config or pass --seed)"))
}

fn check_count(name: &str, n: usize) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::config(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn check_set_dim(set: &SetOracle, d: usize, what: &str) -> CliResult<()> {
    match set.dim() {
        Some(sd) if sd != d => Err(CliError::config(format!("{what} has dimension {sd}, expected {d}"))),
        _ => Ok(()),
    }
}

/// A Gaussian and its truncation set, with an optional known mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedSpec {
    pub params: GaussianParams,
    pub set: SetOracle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl TruncatedSpec {
    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn validate(&self, what: &str) -> CliResult<()> {
        check_set_dim(&self.set, self.dim(), what)?;
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(CliError::config(format!("{what}: alpha must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Knobs for the evaluation that follows an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Draws from the true Gaussian for the symmetric-difference mass.
    #[serde(default = "default_symdiff_draws")]
    pub symdiff_draws: usize,
    /// Draws from `N(0, I)` for the per-degree `ψ` error table; 0 skips it.
    #[serde(default = "default_psi_error_draws")]
    pub psi_error_draws: usize,
}

fn default_symdiff_draws() -> usize {
    100_000
}
fn default_psi_error_draws() -> usize {
    20_000
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { symdiff_draws: default_symdiff_draws(), psi_error_draws: default_psi_error_draws() }
    }
}

/// Extra settings read only by `fig1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Options {
    #[serde(default = "default_degrees")]
    pub degrees: Vec<usize>,
    /// Rows of the stage-1 sample written to `points.csv`.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Free-form description of how the set was chosen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<String>,
}

fn default_degrees() -> Vec<usize> {
    vec![1, 2, 3, 4, 6]
}
fn default_points() -> usize {
    2000
}

impl Default for Fig1Options {
    fn default() -> Self {
        Self { degrees: default_degrees(), points: default_points(), calibration: None }
    }
}

/// Evaluation grid for `recover-set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOptions {
    #[serde(default = "default_grid_radius")]
    pub radius: f64,
    #[serde(default = "default_grid_points")]
    pub points_per_axis: usize,
}

fn default_grid_radius() -> f64 {
    3.0
}
fn default_grid_points() -> usize {
    61
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { radius: default_grid_radius(), points_per_axis: default_grid_points() }
    }
}

/// Configuration of `estimate`, `fig1` and `recover-set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub true_params: GaussianParams,
    pub set: SetOracle,
    /// Known mass of the set under the true Gaussian, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub k: usize,
    pub n_psi: usize,
    pub n_moments: usize,
    #[serde(default)]
    pub whitening: Whitening,
    pub sgd: SgdConfig,
    #[serde(default = "yes")]
    pub trace: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub fig1: Fig1Options,
    #[serde(default)]
    pub grid: GridOptions,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Checks everything that can be checked without sampling and returns
    /// the seed.
    pub fn validate(&self) -> CliResult<u64> {
        let d = self.dimension;
        check_count("dimension", d)?;
        if self.true_params.dim() != d {
            return Err(CliError::config(format!("true_params have dimension {}, expected {d}", self.true_params.dim())));
        }
        check_set_dim(&self.set, d, "set")?;
        check_count("n_psi", self.n_psi)?;
        check_count("n_moments", self.n_moments)?;
        check_count("eval.symdiff_draws", self.eval.symdiff_draws)?;
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(CliError::config("alpha must lie in (0, 1]"));
            }
        }
        self.pipeline().validate(d).map_err(|e| CliError::config(e.to_string()))?;
        require_seed(self.seed)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            n_psi: self.n_psi,
            n_moments: self.n_moments,
            whitening: self.whitening,
            sgd: self.sgd.clone(),
            trace: self.trace,
        }
    }

    pub fn truth(&self) -> TruncatedSpec {
        TruncatedSpec { params: self.true_params.clone(), set: self.set.clone(), alpha: self.alpha }
    }
}

/// Configuration of `lower-bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    pub d: usize,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl LowerBoundConfig {
    pub fn validate(&self) -> CliResult<u64> {
        check_count("d", self.d)?;
        check_count("trials", self.trials)?;
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(CliError::config("sample_sizes must be a non-empty list of positive counts"));
        }
        if self.d > truncgauss::lower_bound::MAX_EXPERIMENT_DIM {
            return Err(CliError::config(format!("d = {} exceeds {}", self.d, truncgauss::lower_bound::MAX_EXPERIMENT_DIM)));
        }
        require_seed(self.seed)
    }
}

/// Configuration of `moment-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentCheckConfig {
    pub first: TruncatedSpec,
    pub second: TruncatedSpec,
    pub k: usize,
    pub n: usize,
    /// Distances at or above this (and beyond the noise band) mean "different".
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_tv_draws")]
    pub tv_draws: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_threshold() -> f64 {
    1e-3
}
fn default_tv_draws() -> usize {
    20_000
}

impl MomentCheckConfig {
    pub fn validate(&self) -> CliResult<u64> {
        self.first.validate("first")?;
        self.second.validate("second")?;
        if self.first.dim() != self.second.dim() {
            return Err(CliError::config("first and second must have the same dimension"));
        }
        if self.n < 2 {
            return Err(CliError::config("n must be at least 2"));
        }
        if self.tv_draws < 2 {
            return Err(CliError::config("tv_draws must be at least 2"));
        }
        if !(self.threshold >= 0.0) {
            return Err(CliError::config("threshold must be non-negative"));
        }
        require_seed(self.seed)
    }
}

/// Grid of hypotheses for `tournament` (d ≤ 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisGrid {
    pub radius: f64,
    pub step: f64,
    pub variances: Vec<f64>,
    /// Candidate sets; when empty the bounding box of the data is used.
    #[serde(default)]
    pub sets: Vec<SetOracle>,
    #[serde(default = "default_mass_draws")]
    pub mass_draws: usize,
}

fn default_mass_draws() -> usize {
    20_000
}

/// Configuration of `tournament`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TournamentCmdConfig {
    pub data: TruncatedSpec,
    pub n_data: usize,
    #[serde(default)]
    pub hypotheses: Vec<TruncatedSpec>,
    #[serde(default)]
    pub grid: Option<HypothesisGrid>,
    pub eps: f64,
    pub delta: f64,
    #[serde(default = "default_ct")]
    pub c_t: f64,
    /// Draws for masses of listed hypotheses without a known `alpha`.
    #[serde(default = "default_mass_draws")]
    pub mass_draws: usize,
    /// Draws for the winner's total variation to the data law; 0 skips it.
    #[serde(default = "default_tv_draws")]
    pub tv_draws: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_ct() -> f64 {
    8.0
}

impl TournamentCmdConfig {
    pub fn validate(&self) -> CliResult<u64> {
        self.data.validate("data")?;
        let d = self.data.dim();
        for (i, h) in self.hypotheses.iter().enumerate() {
            h.validate(&format!("hypotheses[{i}]"))?;
            if h.dim() != d {
                return Err(CliError::config(format!("hypotheses[{i}] has dimension {}, expected {d}", h.dim())));
            }
        }
        if self.hypotheses.is_empty() && self.grid.is_none() {
            return Err(CliError::config("give a hypothesis list, a grid, or both"));
        }
        check_count("n_data", self.n_data)?;
        check_count("mass_draws", self.mass_draws)?;
        if self.tv_draws == 1 {
            return Err(CliError::config("tv_draws must be 0 or at least 2"));
        }
        truncgauss::identifiability::TournamentConfig { eps: self.eps, delta: self.delta, c_t: self.c_t }
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        require_seed(self.seed)
    }
}

/// `--out` wins over the config's `output_dir`, which wins over `out`.
pub fn output_dir(flag: Option<&Path>, configured: Option<&Path>) -> PathBuf {
    flag.or(configured).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"))
}
