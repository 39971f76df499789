//! bundle-sim: simulate collective n-photon bundle emission from emitter
//! chains coupled to a 1D waveguide.

mod commands;
mod config;
mod error;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::{Parser, Subcommand};

use commands::RunContext;
use config::RunConfig;
use error::CliError;

/// Environment variable overriding the output directory (the `--out` flag
/// wins over both this and the config file).
const OUT_ENV: &str = "BUNDLE_SIM_OUT";

#[derive(Parser)]
#[command(
    name = "bundle-sim",
    version,
    about = "Collective n-photon bundle emission simulator",
    after_help = "Exit codes: 0 ok, 2 usage/config, 3 validation, 4 io, 5 numerical, 6 no data."
)]
struct Cli {
    /// Run configuration file (sectioned key = value text).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config and BUNDLE_SIM_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap the trajectory worker pool.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Strip timestamps from plots so outputs are byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collective decay spectrum of the emitter chain.
    Spectrum,
    /// Master-equation observable time series.
    Master,
    /// Monte Carlo trajectory ensemble and click log.
    Trajectories {
        /// Number of trajectories (overrides the config).
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Counting statistics from an existing click log.
    Stats {
        /// Click log produced by `trajectories`.
        #[arg(long)]
        log: PathBuf,
    },
    /// Full preset pipelines emitting data and plots.
    Reproduce {
        /// One of: fig2, fig3, fig4.
        figure: String,
        /// Number of trajectories (overrides the config).
        #[arg(long)]
        trajectories: Option<usize>,
    },
}

fn main() -> ProcessExit {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ProcessExit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ProcessExit::from(e.code as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)
            .map_err(|e| CliError::new(error::ExitCode::Usage, e.message))?,
        // empty text = every default, with derived fields filled in
        None => RunConfig::parse("").expect("defaults are valid"),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    match &cli.command {
        Command::Trajectories {
            trajectories: Some(n),
        }
        | Command::Reproduce {
            trajectories: Some(n),
            ..
        } => cfg.n_trajectories = *n,
        _ => {}
    }

    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.directory));

    let ctx = RunContext {
        cfg,
        workers: cli.workers,
        deterministic: cli.deterministic,
    };
    ctx.cfg
        .validate()
        .map_err(|e| CliError::new(error::ExitCode::Validation, e.message))?;

    match cli.command {
        Command::Spectrum => commands::cmd_spectrum(&ctx, &out_dir),
        Command::Master => commands::cmd_master(&ctx, &out_dir),
        Command::Trajectories { .. } => commands::cmd_trajectories(&ctx, &out_dir),
        Command::Stats { log } => commands::cmd_stats(&ctx, &log, &out_dir),
        Command::Reproduce { figure, .. } => commands::cmd_reproduce(&ctx, &figure, &out_dir),
    }
}
