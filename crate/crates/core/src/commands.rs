//! File-producing entry points behind the command-line subcommands.
//!
//! Output directory layout:
//!
//! ```text
//! stats.csv      one row per training and evaluation episode
//! roles.csv      per-agent reward breakdown over training, with role labels
//! summary.csv    evaluation aggregates (one row per run)
//! config.cfg     the effective configuration
//! *.fsqn         final model checkpoints
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baselines::{central_evaluate, central_train, marl_evaluate, marl_train};
use crate::config::{ConfigError, RunConfig};
use crate::episode::RunError;
use crate::neural::{read_checkpoint, write_checkpoint, CheckpointError, ParameterSet};
use crate::orchestrator::{run_evaluation, run_id, sweep_configs, train_and_evaluate, SweepRun};
use crate::stats::{
    role_summaries, write_roles, write_stats_file, write_summary, Architecture, EpisodeStats, Phase, RunSummary,
};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub const STATS_FILE: &str = "stats.csv";
pub const ROLES_FILE: &str = "roles.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.cfg";
pub const LEADER_CHECKPOINT: &str = "leader.fsqn";

pub fn ally_checkpoint(i: usize) -> String {
    format!("ally{i}.fsqn")
}

pub fn learner_checkpoint(i: usize) -> String {
    format!("agent{i}.fsqn")
}

pub const CENTRAL_CHECKPOINT: &str = "central.fsqn";

/// Sub-directory name of a sweep configuration.
pub fn sweep_dir_name(lifetimes: usize, episodes_per_lifetime: usize) -> String {
    format!("L{lifetimes}xE{episodes_per_lifetime}")
}

fn create_dir(path: &Path) -> Result<(), CommandError> {
    fs::create_dir_all(path).map_err(|source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn save_model(path: PathBuf, params: &ParameterSet) -> Result<(), CommandError> {
    write_checkpoint(&path, params).map_err(|source| CommandError::Checkpoint { path, source })
}

fn load_model(path: PathBuf) -> Result<ParameterSet, CommandError> {
    read_checkpoint(&path).map_err(|source| CommandError::Checkpoint { path, source })
}

fn csv_file(path: PathBuf, write: impl FnOnce(fs::File) -> csv::Result<()>) -> Result<(), CommandError> {
    let file = fs::File::create(&path).map_err(|source| CommandError::Io {
        path: path.clone(),
        source,
    })?;
    write(file).map_err(|source| CommandError::Csv { path, source })
}

fn write_common(
    out: &Path,
    config: &RunConfig,
    run_id: &str,
    architecture: Architecture,
    slots: usize,
    episodes: &[EpisodeStats],
    summary: &RunSummary,
) -> Result<(), CommandError> {
    let stats_path = out.join(STATS_FILE);
    write_stats_file(&stats_path, run_id, architecture, slots, episodes).map_err(|source| CommandError::Csv {
        path: stats_path,
        source,
    })?;
    let roles = role_summaries(episodes, Phase::Train);
    if !roles.is_empty() {
        csv_file(out.join(ROLES_FILE), |f| write_roles(f, run_id, &roles))?;
    }
    csv_file(out.join(SUMMARY_FILE), |f| {
        write_summary(f, std::slice::from_ref(summary))
    })?;
    let cfg_path = out.join(CONFIG_FILE);
    config
        .write(&cfg_path)
        .map_err(|source| CommandError::Io { path: cfg_path, source })
}

fn write_single_run(out: &Path, run: &SweepRun) -> Result<(), CommandError> {
    create_dir(out)?;
    let id = run_id(Architecture::Single, &run.config);
    let mut episodes = run.training.stats.clone();
    episodes.extend(run.evaluation.iter().cloned());
    write_common(
        out,
        &run.config,
        &id,
        Architecture::Single,
        1 + run.config.allies,
        &episodes,
        &run.summary,
    )?;
    save_model(out.join(LEADER_CHECKPOINT), &run.training.leader)?;
    for (i, ally) in run.training.allies.iter().enumerate() {
        save_model(out.join(ally_checkpoint(i + 1)), ally)?;
    }
    Ok(())
}

/// Trains and evaluates the leader-and-allies team, writing everything to
/// `out`.
pub fn train(config: &RunConfig, out: &Path) -> Result<RunSummary, CommandError> {
    let run = train_and_evaluate(config)?;
    write_single_run(out, &run)?;
    Ok(run.summary)
}

/// Evaluates `leader.fsqn` and the consecutive `ally{i}.fsqn` checkpoints
/// found in `models`.
pub fn eval(config: &RunConfig, models: &Path, out: &Path) -> Result<RunSummary, CommandError> {
    let leader = load_model(models.join(LEADER_CHECKPOINT))?;
    let mut allies = Vec::new();
    for i in 1..=config.allies {
        let path = models.join(ally_checkpoint(i));
        if !path.exists() {
            break;
        }
        allies.push(load_model(path)?);
    }
    let stats = run_evaluation(config, &leader, &allies)?;
    let id = run_id(Architecture::Single, config);
    let summary = RunSummary::from_episodes(&id, config.lifetimes, config.episodes_per_lifetime, config.seed, &stats);
    create_dir(out)?;
    write_common(
        out,
        config,
        &id,
        Architecture::Single,
        1 + config.allies,
        &stats,
        &summary,
    )?;
    Ok(summary)
}

/// Runs every `(lifetimes, episodes)` pair into its own sub-directory and
/// writes a combined `summary.csv`.
pub fn sweep(base: &RunConfig, pairs: &[(usize, usize)], out: &Path) -> Result<Vec<RunSummary>, CommandError> {
    let configs = sweep_configs(base, pairs)?;
    create_dir(out)?;
    let mut summaries = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let run = train_and_evaluate(cfg)?;
        write_single_run(
            &out.join(sweep_dir_name(cfg.lifetimes, cfg.episodes_per_lifetime)),
            &run,
        )?;
        summaries.push(run.summary);
    }
    csv_file(out.join(SUMMARY_FILE), |f| write_summary(f, &summaries))?;
    Ok(summaries)
}

/// Trains and evaluates a comparison architecture.
pub fn baseline(config: &RunConfig, architecture: Architecture, out: &Path) -> Result<RunSummary, CommandError> {
    let id = run_id(architecture, config);
    let k = config.baseline_agents();
    create_dir(out)?;
    let (mut episodes, eval) = match architecture {
        Architecture::Marl => {
            let trained = marl_train(config)?;
            let eval = marl_evaluate(config, &trained.agents)?;
            for (i, p) in trained.agents.iter().enumerate() {
                save_model(out.join(learner_checkpoint(i)), p)?;
            }
            (trained.stats, eval)
        }
        Architecture::Central => {
            let trained = central_train(config)?;
            let eval = central_evaluate(config, &trained.params)?;
            save_model(out.join(CENTRAL_CHECKPOINT), &trained.params)?;
            (trained.stats, eval)
        }
        Architecture::Single => {
            let run = train_and_evaluate(config)?;
            write_single_run(out, &run)?;
            return Ok(run.summary);
        }
    };
    let summary = RunSummary::from_episodes(&id, config.lifetimes, config.episodes_per_lifetime, config.seed, &eval);
    episodes.extend(eval);
    write_common(out, config, &id, architecture, k, &episodes, &summary)?;
    Ok(summary)
}
