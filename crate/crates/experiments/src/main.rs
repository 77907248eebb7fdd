use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use experiments::config::{self, output_dir};
use experiments::overrides::{self, Override};
use experiments::{commands, CliResult};
use serde::Serialize;

/// Estimation of Gaussians from truncated samples.
///
/// Any config leaf can be overridden with a dotted flag, e.g. `--sgd.T 50000`
/// or `--set.offset=-0.3`.
#[derive(Debug, Parser)]
#[command(name = "truncgauss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON config document.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline: report.json, trace.csv.
    Estimate(Common),
    /// Mean estimates over Hermite degrees: report.json, points.csv, summary.csv, trace.csv.
    Fig1(Common),
    /// Error and collisions on the lower-bound family: report.json, summary.csv, trials.csv.
    LowerBound(Common),
    /// Moment distance between two truncated Gaussians: report.json.
    MomentCheck(Common),
    /// Recovered versus true set on a grid: report.json, points.csv.
    RecoverSet(Common),
    /// Scheffé tournament over hypotheses: report.json.
    Tournament(Common),
}

fn run<C, R>(
    common: &Common,
    overrides: &[Override],
    dir_of: impl Fn(&C) -> Option<&Path>,
    f: impl Fn(&C, &Path) -> CliResult<R>,
) -> CliResult<()>
where
    C: serde::de::DeserializeOwned,
    R: Serialize,
{
    let cfg: C = config::load(&common.config, overrides, common.seed)?;
    let out = output_dir(common.out.as_deref(), dir_of(&cfg));
    f(&cfg, &out)?;
    eprintln!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn dispatch(cli: Cli, o: &[Override]) -> CliResult<()> {
    match &cli.command {
        Command::Estimate(c) => run(c, o, |c: &experiments::ExperimentConfig| c.output_dir.as_deref(), commands::cmd_estimate),
        Command::Fig1(c) => run(c, o, |c: &experiments::ExperimentConfig| c.output_dir.as_deref(), commands::cmd_fig1),
        Command::RecoverSet(c) => run(c, o, |c: &experiments::ExperimentConfig| c.output_dir.as_deref(), commands::cmd_recover_set),
        Command::LowerBound(c) => run(c, o, |c: &experiments::LowerBoundConfig| c.output_dir.as_deref(), commands::cmd_lower_bound),
        Command::MomentCheck(c) => run(c, o, |c: &experiments::MomentCheckConfig| c.output_dir.as_deref(), commands::cmd_moment_check),
        Command::Tournament(c) => run(c, o, |c: &experiments::TournamentCmdConfig| c.output_dir.as_deref(), commands::cmd_tournament),
    }
}

fn main() -> ExitCode {
    let (overrides, args) = match overrides::extract(std::env::args()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
