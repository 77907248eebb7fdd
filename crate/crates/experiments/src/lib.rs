//! Experiment harness for the `truncgauss` estimators: JSON configs with
//! dotted-path overrides, the command implementations behind the
//! `truncgauss` binary, and their reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod overrides;
pub mod report;

pub use commands::{cmd_estimate, cmd_fig1, cmd_lower_bound, cmd_moment_check, cmd_recover_set, cmd_tournament, Verdict};
pub use config::{ExperimentConfig, LowerBoundConfig, MomentCheckConfig, TournamentCmdConfig, TruncatedSpec};
pub use error::{CliError, CliResult};
pub use report::{EstimationReport, Timings};
