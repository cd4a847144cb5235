//! `mcarma`: solvents, OU decompositions, sampled VARMA parameters,
//! autocovariances and simulated paths for MCARMA models read from JSON.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical certification failure.

mod commands;
mod format;
mod model;
mod verify;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Core(mcarma_core::Error),
    Io(String),
    /// `verify` ran but at least one check failed.
    ChecksFailed,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{}: {e}", e.name()),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::ChecksFailed => write!(f, "verification failed"),
        }
    }
}

impl From<mcarma_core::Error> for CliError {
    fn from(e: mcarma_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 1,
            CliError::Core(e) if e.is_input_error() => 1,
            CliError::Core(_) | CliError::ChecksFailed => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "mcarma", version, about = "Matrix-polynomial analysis and simulation of MCARMA processes")]
struct Cli {
    /// Log more (repeat for debug output). Logs go to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model file (JSON with A, B, sigma_L and an optional driver).
    model: PathBuf,
    /// `auto`, or a JSON list of index groups into the sorted latent roots.
    #[arg(long, default_value = "auto")]
    grouping: String,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Certified complete set of right solvents (JSON).
    Solvents(Common),
    /// OU components `(R_k, Res_k)` (JSON).
    Decompose(Common),
    /// Stationary autocovariance at lags 0, h, …, Lh (CSV `lag,i,j,value`).
    Acvf {
        #[command(flatten)]
        common: Common,
        /// Sampling step.
        #[arg(long)]
        h: f64,
        /// Largest lag, in steps of h.
        #[arg(long, default_value_t = 10)]
        lags: usize,
    },
    /// Exact sampled VARMA(p, p−1) parameters (JSON).
    Varma {
        #[command(flatten)]
        common: Common,
        /// Sampling step.
        #[arg(long)]
        h: f64,
    },
    /// Simulated observations on the grid {nh} (CSV `n,Y_1..Y_d`).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Sampling step.
        #[arg(long)]
        h: f64,
        /// Number of observations.
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw X(0) from the stationary law instead of starting at zero.
        #[arg(long)]
        stationary_start: bool,
        /// Append the sampled noise columns U_1..U_d (empty for n ≤ p).
        #[arg(long)]
        emit_noise: bool,
    },
    /// Run the invariant suite and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Sampling step.
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, default_value_t = 10)]
        lags: usize,
        /// Length of the simulated path used for the Monte Carlo check.
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Solvents(c) | Command::Decompose(c) => c,
        Command::Acvf { common, .. }
        | Command::Varma { common, .. }
        | Command::Simulate { common, .. }
        | Command::Verify { common, .. } => common,
    };
    let grouping = commands::parse_grouping(&common.grouping)?;
    let loaded = model::load(&common.model)?;
    let mut out = open_output(&common.out)?;
    match cli.command {
        Command::Solvents(_) => commands::solvents(&loaded, &grouping, &mut out)?,
        Command::Decompose(_) => commands::decompose(&loaded, &grouping, &mut out)?,
        Command::Acvf { h, lags, .. } => commands::acvf(&loaded, &grouping, h, lags, &mut out)?,
        Command::Varma { h, .. } => commands::varma(&loaded, &grouping, h, &mut out)?,
        Command::Simulate {
            h,
            steps,
            seed,
            stationary_start,
            emit_noise,
            ..
        } => {
            let args = commands::SimulateArgs {
                h,
                steps,
                seed,
                stationary_start,
                emit_noise,
            };
            commands::simulate(&loaded, &grouping, &args, &mut out)?
        }
        Command::Verify { h, lags, steps, seed, .. } => {
            let args = verify::VerifyArgs { h, lags, steps, seed };
            let passed = verify::run(&loaded, &grouping, &args, &mut out)?;
            out.flush()?;
            if !passed {
                return Err(CliError::ChecksFailed);
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    // explicit level only; the environment is not consulted
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
