//! Run configuration and its plain-text `key = value` format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; missing keys keep their defaults. See [`RunConfig::KEYS`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::dqn::DqnConfig;
use crate::grid::EnvConfig;
use crate::neural::NetworkSpec;
use crate::reward::RewardWeights;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("`{key}`: cannot parse `{value}`")]
    Parse { key: &'static str, value: String },
    #[error("`{key}` = {value} is out of range: {expected}")]
    OutOfRange {
        key: &'static str,
        value: String,
        expected: &'static str,
    },
}

impl ConfigError {
    /// The configuration key the error is about, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. } | ConfigError::DuplicateKey { key, .. } => Some(key),
            ConfigError::Parse { key, .. } | ConfigError::OutOfRange { key, .. } => Some(key),
            ConfigError::Io { .. } | ConfigError::Syntax { .. } => None,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid_size: usize,
    pub density: f64,
    pub allies: usize,
    pub adversaries: usize,
    pub radius: usize,
    pub adversary_radius: usize,
    pub dqn: DqnConfig,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub lifetimes: usize,
    pub episodes_per_lifetime: usize,
    pub timesteps: usize,
    pub eval_episodes: usize,
    pub mutation_sigma: f64,
    pub reward: RewardWeights,
    pub seed: u64,
    /// Learners in the MARL and centralised baselines; defaults to the
    /// friendly headcount `1 + allies`.
    pub baseline_agents: Option<usize>,
    /// Whether per-timestep wall-clock statistics are written. Timing makes
    /// output files differ between otherwise identical runs.
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_size: 100,
            density: 0.1,
            allies: 4,
            adversaries: 5,
            radius: 10,
            adversary_radius: 10,
            dqn: DqnConfig::default(),
            conv_channels: vec![16, 32],
            hidden: 128,
            lifetimes: 10,
            episodes_per_lifetime: 40,
            timesteps: 100,
            eval_episodes: 50,
            mutation_sigma: 0.01,
            reward: RewardWeights::default(),
            seed: 0,
            baseline_agents: None,
            record_timing: false,
        }
    }
}

fn parse<T: FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        key,
        value: value.to_string(),
    })
}

fn parse_list(key: &'static str, value: &str) -> Result<Vec<usize>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn out_of_range(key: &'static str, value: impl ToString, expected: &'static str) -> ConfigError {
    ConfigError::OutOfRange {
        key,
        value: value.to_string(),
        expected,
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "grid_size",
        "density",
        "allies",
        "adversaries",
        "radius",
        "adversary_radius",
        "learning_rate",
        "discount",
        "epsilon_initial",
        "epsilon_decay",
        "epsilon_min",
        "replay_capacity",
        "batch_size",
        "target_refresh",
        "conv_channels",
        "hidden",
        "lifetimes",
        "episodes_per_lifetime",
        "timesteps",
        "eval_episodes",
        "mutation_sigma",
        "reward_collect",
        "weight_adversary",
        "weight_ally",
        "seed",
        "baseline_agents",
        "record_timing",
    ];

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<&'static str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            let key = *Self::KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.to_string(),
                })?;
            if seen.contains(&key) {
                return Err(ConfigError::DuplicateKey {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &'static str, v: &str) -> Result<(), ConfigError> {
        match key {
            "grid_size" => self.grid_size = parse(key, v)?,
            "density" => self.density = parse(key, v)?,
            "allies" => self.allies = parse(key, v)?,
            "adversaries" => self.adversaries = parse(key, v)?,
            "radius" => self.radius = parse(key, v)?,
            "adversary_radius" => self.adversary_radius = parse(key, v)?,
            "learning_rate" => self.dqn.learning_rate = parse(key, v)?,
            "discount" => self.dqn.discount = parse(key, v)?,
            "epsilon_initial" => self.dqn.epsilon_initial = parse(key, v)?,
            "epsilon_decay" => self.dqn.epsilon_decay = parse(key, v)?,
            "epsilon_min" => self.dqn.epsilon_min = parse(key, v)?,
            "replay_capacity" => self.dqn.replay_capacity = parse(key, v)?,
            "batch_size" => self.dqn.batch_size = parse(key, v)?,
            "target_refresh" => self.dqn.target_refresh = parse(key, v)?,
            "conv_channels" => self.conv_channels = parse_list(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "lifetimes" => self.lifetimes = parse(key, v)?,
            "episodes_per_lifetime" => self.episodes_per_lifetime = parse(key, v)?,
            "timesteps" => self.timesteps = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "mutation_sigma" => self.mutation_sigma = parse(key, v)?,
            "reward_collect" => self.reward.collect = parse(key, v)?,
            "weight_adversary" => self.reward.adversary = parse(key, v)?,
            "weight_ally" => self.reward.ally = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "baseline_agents" => self.baseline_agents = Some(parse(key, v)?),
            "record_timing" => self.record_timing = parse(key, v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |key, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(out_of_range(key, v, "must lie in [0, 1]"))
            }
        };
        let positive = |key, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(out_of_range(key, v, "must be at least 1"))
            }
        };
        if self.grid_size < 3 {
            return Err(out_of_range("grid_size", self.grid_size, "must be at least 3"));
        }
        unit("density", self.density)?;
        let cells = self.grid_size * self.grid_size;
        if 1 + self.allies + self.adversaries > cells {
            return Err(out_of_range(
                "allies",
                self.allies,
                "leader, allies and adversaries must fit on the grid",
            ));
        }
        positive("radius", self.radius)?;
        positive("adversary_radius", self.adversary_radius)?;
        if !(self.dqn.learning_rate > 0.0 && self.dqn.learning_rate.is_finite()) {
            return Err(out_of_range(
                "learning_rate",
                self.dqn.learning_rate,
                "must be positive",
            ));
        }
        unit("discount", self.dqn.discount)?;
        unit("epsilon_initial", self.dqn.epsilon_initial)?;
        if !(self.dqn.epsilon_decay > 0.0 && self.dqn.epsilon_decay <= 1.0) {
            return Err(out_of_range(
                "epsilon_decay",
                self.dqn.epsilon_decay,
                "must lie in (0, 1]",
            ));
        }
        unit("epsilon_min", self.dqn.epsilon_min)?;
        positive("replay_capacity", self.dqn.replay_capacity)?;
        positive("batch_size", self.dqn.batch_size)?;
        if self.dqn.batch_size > self.dqn.replay_capacity {
            return Err(out_of_range(
                "batch_size",
                self.dqn.batch_size,
                "must not exceed replay_capacity",
            ));
        }
        positive("target_refresh", self.dqn.target_refresh)?;
        if self.conv_channels.contains(&0) {
            return Err(out_of_range(
                "conv_channels",
                format!("{:?}", self.conv_channels),
                "channel counts must be positive",
            ));
        }
        positive("lifetimes", self.lifetimes)?;
        positive("episodes_per_lifetime", self.episodes_per_lifetime)?;
        positive("timesteps", self.timesteps)?;
        positive("eval_episodes", self.eval_episodes)?;
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(out_of_range(
                "mutation_sigma",
                self.mutation_sigma,
                "must be non-negative",
            ));
        }
        if !(self.reward.collect > 0.0 && self.reward.collect.is_finite()) {
            return Err(out_of_range("reward_collect", self.reward.collect, "must be positive"));
        }
        if !(self.reward.adversary >= 0.0 && self.reward.adversary.is_finite()) {
            return Err(out_of_range(
                "weight_adversary",
                self.reward.adversary,
                "must be non-negative",
            ));
        }
        if !(self.reward.ally >= 0.0 && self.reward.ally.is_finite()) {
            return Err(out_of_range("weight_ally", self.reward.ally, "must be non-negative"));
        }
        if let Some(k) = self.baseline_agents {
            positive("baseline_agents", k)?;
            if k + self.adversaries > cells {
                return Err(out_of_range(
                    "baseline_agents",
                    k,
                    "learners and adversaries must fit on the grid",
                ));
            }
        }
        Ok(())
    }

    /// The configuration in the format accepted by [`RunConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("grid_size", self.grid_size.to_string());
        put("density", self.density.to_string());
        put("allies", self.allies.to_string());
        put("adversaries", self.adversaries.to_string());
        put("radius", self.radius.to_string());
        put("adversary_radius", self.adversary_radius.to_string());
        put("learning_rate", self.dqn.learning_rate.to_string());
        put("discount", self.dqn.discount.to_string());
        put("epsilon_initial", self.dqn.epsilon_initial.to_string());
        put("epsilon_decay", self.dqn.epsilon_decay.to_string());
        put("epsilon_min", self.dqn.epsilon_min.to_string());
        put("replay_capacity", self.dqn.replay_capacity.to_string());
        put("batch_size", self.dqn.batch_size.to_string());
        put("target_refresh", self.dqn.target_refresh.to_string());
        put(
            "conv_channels",
            self.conv_channels
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("hidden", self.hidden.to_string());
        put("lifetimes", self.lifetimes.to_string());
        put("episodes_per_lifetime", self.episodes_per_lifetime.to_string());
        put("timesteps", self.timesteps.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("mutation_sigma", self.mutation_sigma.to_string());
        put("reward_collect", self.reward.collect.to_string());
        put("weight_adversary", self.reward.adversary.to_string());
        put("weight_ally", self.reward.ally.to_string());
        put("seed", self.seed.to_string());
        if let Some(k) = self.baseline_agents {
            put("baseline_agents", k.to_string());
        }
        put("record_timing", self.record_timing.to_string());
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_config_string())
    }

    pub fn training_episodes(&self) -> usize {
        self.lifetimes * self.episodes_per_lifetime
    }

    pub fn baseline_agents(&self) -> usize {
        self.baseline_agents.unwrap_or(1 + self.allies)
    }

    /// Environment with one leader, `allies` allies and the adversaries.
    pub fn env(&self, allies: usize) -> EnvConfig {
        EnvConfig::square(self.grid_size, self.density, 1, allies, self.adversaries)
    }

    /// Q-network for `heads` controlled agents, each contributing three
    /// observation channels.
    pub fn network(&self, heads: usize) -> NetworkSpec {
        NetworkSpec::with_widths(
            crate::grid::Observation::CHANNELS * heads,
            self.radius,
            &self.conv_channels,
            self.hidden,
            heads,
        )
    }
}
