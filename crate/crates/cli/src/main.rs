use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tensor_fen_cli::commands::{self, ReportArgs, SimulateArgs, TuneFitArgs};
use tensor_fen_cli::{io, CliError};

/// Bayesian fused elastic-net regression on tensor covariates.
#[derive(Parser)]
#[command(name = "tfen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from one of the nine simulation settings.
    Simulate {
        #[arg(long)]
        setting: u8,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Grid size such as `15x15`.
        #[arg(long, default_value = "15x15")]
        shape: String,
        /// Mask file overriding the setting's active pattern.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Number of smooth Laplacian eigenfields used for the coefficient fields.
        #[arg(long, default_value_t = 80)]
        eigenfields: usize,
    },
    /// Tune hyperparameters on a validation split and fit the final chain.
    TuneFit {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Expected shape, checked against the covariate file.
        #[arg(long)]
        shape: Option<String>,
        /// Flat `key = value` file with grids and chain lengths.
        #[arg(long)]
        grids_file: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Refit on training and validation data together.
        #[arg(long)]
        pooled: bool,
        /// Worker threads; more than one runs every grid point from a cold start in parallel.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Evaluate a fit against a known truth and a test set.
    Report {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        test_x: PathBuf,
        #[arg(long)]
        test_y: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { setting, n, seed, out, shape, mask, eigenfields } => {
            let s = io::parse_shape(&shape)?;
            let &[p1, p2] = s.dims() else {
                return Err(CliError::Config("simulation grids are two-dimensional".into()));
            };
            commands::simulate(&SimulateArgs { setting, n, seed, shape: (p1, p2), mask, eigenfields, out })
        }
        Command::TuneFit { x, y, shape, grids_file, seed, out, pooled, jobs } => {
            let res = commands::tune_fit(&TuneFitArgs { x, y, shape, grids_file, seed, pooled, jobs, out })?;
            let b = res.tune.best;
            println!("best p0={} r={} rho={} loss={}", b.p0, b.r, b.rho, res.tune.best_loss);
            Ok(())
        }
        Command::Report { fit, truth, test_x, test_y, out } => {
            let m = commands::report(&ReportArgs { fit, truth, test_x, test_y, out })?;
            println!("mse={} rmse={} tpr={} tnr={} rpe={}", m.mse, m.rmse, m.tpr, m.tnr, m.rpe);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tfen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
