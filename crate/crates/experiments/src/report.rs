//! Report types and file output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use truncgauss::McEstimate;

use crate::error::{CliError, CliResult};

/// Wall-clock seconds per stage and in total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

impl Timings {
    pub fn stage_sum(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }
}

/// Stage stopwatch: each `lap` closes the running stage and starts the next.
pub struct Stopwatch {
    start: Instant,
    lap_start: Instant,
    timings: Timings,
}

impl Stopwatch {
    pub fn start() -> Self {
        let now = Instant::now();
        Self { start: now, lap_start: now, timings: Timings::default() }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.stages.push(StageTiming { stage: stage.to_string(), seconds: (now - self.lap_start).as_secs_f64() });
        self.lap_start = now;
    }

    /// Records stages timed elsewhere and restarts the lap clock.
    pub fn adopt(&mut self, stages: &[(String, f64)]) {
        for (stage, seconds) in stages {
            self.timings.stages.push(StageTiming { stage: stage.clone(), seconds: *seconds });
        }
        self.lap_start = Instant::now();
    }

    pub fn finish(mut self, stage: &str) -> Timings {
        self.lap(stage);
        self.timings.total_seconds = self.start.elapsed().as_secs_f64();
        self.timings
    }
}

pub fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// One row of the per-degree `ψ` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub degree: usize,
    /// `Σ_{|V| = degree} c̃_V²`.
    pub energy: f64,
    /// `Σ_{|V| ≤ degree} c̃_V²`.
    pub cumulative_energy: f64,
    /// `E_{N₀}[(ψ_degree⁺ − ψ)²]` in working coordinates, when evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_error: Option<McEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub clamp_count: u64,
}

/// Output of `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub seed: u64,
    pub k: usize,
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub alpha_hat: f64,
    pub mu_s: Vec<f64>,
    pub sigma_s: Vec<Vec<f64>>,
    /// `‖μ̂ − μ*‖₂`.
    pub mean_error: f64,
    /// `‖Σ̂ − Σ*‖_F`.
    pub covariance_error: f64,
    pub lambda: f64,
    pub projection_a: f64,
    pub projection_b: f64,
    pub medoid: usize,
    pub runs: Vec<RunSummary>,
    pub degree_table: Vec<DegreeRow>,
    /// File holding the objective traces, relative to the report.
    pub trace_file: Option<String>,
    pub symdiff_mass: McEstimate,
    pub timings: Timings,
}

/// Creates `dir` and returns it.
pub fn ensure_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir.to_path_buf())
}

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Small CSV writer with a fixed column count.
pub struct CsvWriter {
    path: PathBuf,
    out: std::io::BufWriter<std::fs::File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> CliResult<Self> {
        let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = Self { path: path.to_path_buf(), out: std::io::BufWriter::new(file), columns: header.len() };
        w.line(header.iter().map(|s| s.to_string()))?;
        Ok(w)
    }

    fn line(&mut self, fields: impl Iterator<Item = String>) -> CliResult<()> {
        let fields: Vec<String> = fields.collect();
        debug_assert_eq!(fields.len(), self.columns);
        writeln!(self.out, "{}", fields.join(",")).map_err(|e| io_err(&self.path, e))
    }

    pub fn row(&mut self, fields: &[String]) -> CliResult<()> {
        if fields.len() != self.columns {
            return Err(io_err(&self.path, format!("row has {} fields, header has {}", fields.len(), self.columns)));
        }
        self.line(fields.iter().cloned())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.out.flush().map_err(|e| io_err(&self.path, e))
    }
}

/// Shortest round-trip formatting for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwatch_accounts_for_all_time() {
        let mut sw = Stopwatch::start();
        std::thread::sleep(std::time::Duration::from_millis(5));
        sw.lap("a");
        let t = sw.finish("b");
        assert_eq!(t.stages.len(), 2);
        assert!(t.stage_sum() <= t.total_seconds + 1e-9);
        assert!(t.stage_sum() >= 0.95 * t.total_seconds);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let mut w = CsvWriter::create(&p, &["a", "b"]).unwrap();
        w.row(&[num(1.0), num(0.1)]).unwrap();
        assert!(w.row(&[num(1.0)]).is_err());
        w.finish().unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n1.0,0.1\n");
    }
}
