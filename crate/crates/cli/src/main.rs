use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod output;

use output::CliError;

/// Threshold solvers, tariff synthesis and verification for the liability
/// design model.
#[derive(Debug, Parser)]
#[command(name = "wald-liability", version)]
pub struct Cli {
    /// Scenario file (JSON). Defaults to the built-in reference model.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Evidence grid step (default sigma^2 / 20).
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Directory for report files; reports go to standard output otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Value tolerance (default 1e-9 * pi).
    #[arg(long, global = true)]
    pub tol_v: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TariffChoice {
    Zero,
    Ceiling,
    Scenario,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First-best and uniform-ceiling thresholds per prior (CSV).
    Benchmarks,
    /// Best responses to a tariff from evidence 0 (CSV).
    Solve {
        #[arg(long, value_enum, default_value_t = TariffChoice::Scenario)]
        tariff: TariffChoice,
    },
    /// Tariff implementing the scenario's target launch levels (JSON).
    Synthesize,
    /// Ceiling conversion of the scenario's menu (JSON).
    Convert,
    /// Fee menu where the safe firm launches earlier (JSON).
    Counterexample,
    /// Full property suite (JSON); exits 4 on any violation.
    Verify {
        #[arg(long, default_value_t = 200)]
        crossing_trials: usize,
        #[arg(long, default_value_t = 3)]
        param_sets: usize,
        #[arg(long, default_value_t = 20_000)]
        sim_paths: usize,
    },
    /// Monte Carlo exit statistics and payoffs against closed forms (CSV).
    Simulate,
    /// Threshold curves while one parameter varies (CSV).
    Sweep {
        /// One of sigma, c, pi, beta, l, L.
        #[arg(long)]
        param: String,
        /// start:stop:count
        #[arg(long)]
        range: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return CliError::Usage(e.to_string()).report();
        }
    };
    if let Err(e) = configure_threads() {
        return e.report();
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var("WALD_LIABILITY_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("WALD_LIABILITY_THREADS must be a positive integer, got `{text}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}
