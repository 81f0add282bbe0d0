//! Thin command-line front end; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dda::config::{ExperimentConfig, Overrides};
use dda::driver::{cmd_check, cmd_mixing, cmd_montecarlo, cmd_rate_probe, cmd_run, DriverError};

#[derive(Parser)]
#[command(
    name = "dda",
    about = "Distributed dual averaging over random gossip networks",
    long_about = "Runs constrained distributed dual averaging experiments from a TOML config: \
single trajectories, Monte Carlo batches, exact mixing analysis, assumption checks, and \
almost-sure rate probes. Exit codes: 0 success, 1 configuration error, 2 numerical failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override run.master_seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override run.runs (number of replications).
    #[arg(long, global = true, value_name = "N")]
    runs: Option<usize>,

    /// Override run.steps (rounds per run).
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,

    /// Override scheme.kind (pairwise | broadcast | fixed).
    #[arg(long, global = true, value_name = "NAME")]
    scheme: Option<String>,

    /// Override run.agent (0-based tracked agent).
    #[arg(long, global = true, value_name = "J")]
    agent: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded trajectory; writes trajectory.csv and run.json.
    Run,
    /// Run a replication batch; writes samples.csv, histogram.csv,
    /// consensus.csv, and montecarlo.json.
    Montecarlo,
    /// Enumerate the gossip scheme's mixing behavior; writes mixing.json.
    Mixing,
    /// Print a pass/warn line per standing assumption; writes nothing.
    Check,
    /// Probe the almost-sure rate on tail windows; writes consensus.csv and
    /// rate_probe.json.
    RateProbe,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, DriverError> {
    let path = cli.config.as_deref().ok_or_else(|| {
        dda::config::ConfigError::Invalid("--config PATH is required".into())
    })?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    cfg.apply_overrides(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        runs: cli.runs,
        steps: cli.steps,
        scheme: cli.scheme.clone(),
        agent: cli.agent,
    })?;
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), DriverError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Run => {
            for path in cmd_run(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Montecarlo => {
            for path in cmd_montecarlo(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Mixing => {
            for path in cmd_mixing(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Check => {
            let mut stdout = std::io::stdout().lock();
            cmd_check(&cfg, &mut stdout)?;
        }
        Command::RateProbe => {
            for path in cmd_rate_probe(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
