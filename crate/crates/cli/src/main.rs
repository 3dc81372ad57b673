//! `forage` command-line front end.
//!
//! Every subcommand reads a `key = value` configuration file, runs to
//! completion and writes its CSVs and checkpoints into an output directory.
//! Failures print a single `error:` line and exit with status 1; malformed
//! invocations print usage and exit with status 2.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use forage::commands;
use forage::config::{ConfigError, RunConfig};
use forage::orchestrator::parse_pairs;
use forage::stats::{Architecture, RunSummary};

#[derive(Debug, Parser)]
#[command(
    name = "forage",
    version,
    about = "Grid-world foraging: single learning leader with model sharing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the leader, disseminate to allies and evaluate the final team.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Records per-timestep wall-clock (makes timing columns nondeterministic).
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate saved checkpoints without further training.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding leader.fsqn and ally{i}.fsqn.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate several lifetimes-by-episodes splits.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated `LxE` pairs, e.g. "10x40,20x20".
        #[arg(long)]
        pairs: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate a comparison architecture.
    Baseline {
        #[arg(long, value_enum)]
        arch: BaselineArch,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineArch {
    Marl,
    Central,
}

impl From<BaselineArch> for Architecture {
    fn from(a: BaselineArch) -> Self {
        match a {
            BaselineArch::Marl => Architecture::Marl,
            BaselineArch::Central => Architecture::Central,
        }
    }
}

fn load(path: &PathBuf) -> Result<RunConfig> {
    match RunConfig::load(path) {
        Err(e @ ConfigError::Io { .. }) => Err(e.into()),
        other => other.with_context(|| path.display().to_string()),
    }
}

fn report(summary: &RunSummary) {
    println!(
        "{}: friendly {:.2} adversary {:.2} wins {}/{}",
        summary.run_id, summary.friendly_mean, summary.adversary_mean, summary.friendly_wins, summary.eval_episodes
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            timing,
        } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.record_timing |= timing;
            report(&commands::train(&cfg, &out)?);
        }
        Command::Eval { config, models, out } => {
            let cfg = load(&config)?;
            report(&commands::eval(&cfg, &models, &out)?);
        }
        Command::Sweep { config, pairs, out } => {
            let cfg = load(&config)?;
            let pairs = parse_pairs(&pairs)?;
            for summary in commands::sweep(&cfg, &pairs, &out)? {
                report(&summary);
            }
        }
        Command::Baseline {
            arch,
            config,
            out,
            timing,
        } => {
            let mut cfg = load(&config)?;
            cfg.record_timing |= timing;
            report(&commands::baseline(&cfg, arch.into(), &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
