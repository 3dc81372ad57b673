//! One episode of play: shuffled turns, adversary moves, reward
//! attribution and per-timestep timing. Friendly agents are driven by a
//! [`Controller`], which also owns any learning.

use std::time::Instant;

use thiserror::Error;

use crate::adversary::adversary_action;
use crate::dqn::LearnError;
use crate::grid::{Action, EnvConfig, GridError, GridWorld, Team};
use crate::neural::NetworkError;
use crate::reward::{reward_for_move, RewardBreakdown, RewardError, RewardWeights};
use crate::stats::{AgentRecord, StepTiming};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{0}")]
    Invalid(String),
}

/// Decides friendly moves and reacts to their outcomes.
pub trait Controller {
    /// Called once at the start of every timestep, before any agent moves.
    fn begin_timestep(&mut self, _world: &GridWorld) -> Result<(), RunError> {
        Ok(())
    }

    /// The move of friendly agent `id`, called on its turn.
    fn choose(&mut self, world: &GridWorld, id: usize) -> Result<Action, RunError>;

    /// The reward friendly agent `id` earned with its last move.
    fn rewarded(&mut self, _id: usize, _reward: &RewardBreakdown) {}

    /// Called after every agent has moved; `last` marks the final timestep.
    fn end_timestep(&mut self, _world: &GridWorld, _last: bool) -> Result<(), RunError> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeSetup<'a> {
    pub env: &'a EnvConfig,
    pub seed: u64,
    pub episode_index: u64,
    pub timesteps: usize,
    pub adversary_radius: usize,
    pub weights: &'a RewardWeights,
    pub record_timing: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub world: GridWorld,
    pub friendly: u32,
    pub adversary: u32,
    /// Friendly agents in id order.
    pub agents: Vec<AgentRecord>,
    pub timing: Option<StepTiming>,
}

/// Plays one freshly sampled episode.
pub fn run_episode(setup: &EpisodeSetup<'_>, controller: &mut dyn Controller) -> Result<EpisodeResult, RunError> {
    let world = GridWorld::init_episode(setup.env, setup.seed, setup.episode_index)?;
    play(world, setup, controller)
}

/// Plays `setup.timesteps` timesteps on an existing world.
pub fn play(
    mut world: GridWorld,
    setup: &EpisodeSetup<'_>,
    controller: &mut dyn Controller,
) -> Result<EpisodeResult, RunError> {
    let mut samples = Vec::with_capacity(if setup.record_timing { setup.timesteps } else { 0 });
    let max_distance = world.max_distance();
    for t in 0..setup.timesteps {
        let started = Instant::now();
        controller.begin_timestep(&world)?;
        for id in world.turn_order() {
            let team = world.agent(id)?.team;
            if team == Team::Adversary {
                let obs = world.observe(id, setup.adversary_radius)?;
                let action = adversary_action(&obs, world.rng_mut());
                world.step_agent(id, action)?;
                continue;
            }
            let action = controller.choose(&world, id)?;
            let outcome = world.step_agent(id, action)?;
            let reward = if outcome.collected {
                let allies = world.friendly_positions_except(id);
                let adversaries = world.adversary_positions();
                reward_for_move(
                    true,
                    outcome.position,
                    &allies,
                    &adversaries,
                    max_distance,
                    setup.weights,
                )?
            } else {
                RewardBreakdown::default()
            };
            world.agent_mut(id)?.reward += reward;
            controller.rewarded(id, &reward);
        }
        world.advance_timestep();
        controller.end_timestep(&world, t + 1 == setup.timesteps)?;
        if setup.record_timing {
            samples.push(started.elapsed().as_secs_f64());
        }
    }
    let (friendly, adversary) = world.team_totals();
    let agents = world
        .agents()
        .iter()
        .filter(|a| a.team.is_friendly())
        .map(|a| AgentRecord {
            team: a.team,
            collected: a.collected,
            reward: a.reward,
        })
        .collect();
    Ok(EpisodeResult {
        world,
        friendly,
        adversary,
        agents,
        timing: setup.record_timing.then(|| StepTiming::from_samples(&samples)),
    })
}
