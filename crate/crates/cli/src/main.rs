//! `resilisim` — estimate and improve storm resilience of a synthetic power
//! distribution network.
//!
//! Exit codes: 0 on success, 1 for configuration/usage problems, 2 for
//! runtime failures (I/O, corrupt artifacts, simulation errors).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "resilisim", version, about = "storm resilience simulator and planner")]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Override master_seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override n_episodes from the config.
    #[arg(long, global = true)]
    episodes: Option<u64>,
    /// Override worker thread count (0 = one per hardware thread).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the area names the enhancement objective minimizes over.
    #[arg(long, global = true, value_delimiter = ',')]
    areas: Option<Vec<String>>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic city as raw input files.
    Testbed,
    /// Build the network graph from the raw input files.
    Synth,
    /// Monte Carlo resilience estimate; records episodes for replay.
    Estimate,
    /// Evolve a solar/battery placement plan against recorded episodes.
    Enhance,
    /// Summarize the artifacts of previous commands.
    Report,
}

/// Error carrying its exit-code class. Config errors are the user's to fix
/// (bad config, missing prerequisite, unknown flag); runtime errors are
/// failures while executing a well-formed request.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn config(e: anyhow::Error) -> Self {
        CliError::Config(e)
    }

    pub fn runtime(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if !cli.config.is_file() {
        return Err(CliError::config(anyhow::anyhow!(
            "config file {} not found (pass --config or create run.toml)",
            cli.config.display()
        )));
    }
    let mut cfg = RunConfig::load(&cli.config).map_err(CliError::config)?;
    cfg.apply_overrides(
        cli.seed,
        cli.episodes,
        cli.threads,
        cli.areas.clone(),
    );
    cfg.validate().map_err(CliError::config)?;

    match cli.cmd {
        Cmd::Testbed => commands::cmd_testbed(&cfg),
        Cmd::Synth => commands::cmd_synth(&cfg),
        Cmd::Estimate => commands::cmd_estimate(&cfg),
        Cmd::Enhance => commands::cmd_enhance(&cfg),
        Cmd::Report => commands::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // usage problem and lands in the config exit class.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
