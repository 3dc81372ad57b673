//! Comparison architectures under the same environment and episode budget:
//! independent learners, and one centralized network controlling everyone.

use crate::config::RunConfig;
use crate::dqn::{greedy_action, DqnAgent, JointExperience};
use crate::episode::{run_episode, Controller, EpisodeSetup, RunError};
use crate::grid::{Action, EnvConfig, GridWorld, Observation};
use crate::neural::{forward_observations, NetworkSpec, ParameterSet};
use crate::orchestrator::{episode_stats, eval_setup, Member, Squad};
use crate::reward::RewardBreakdown;
use crate::stats::{EpisodeStats, Phase};

/// Environment with `k` learners (all on the leader team) and the
/// configured adversaries.
pub fn baseline_env(config: &RunConfig, k: usize) -> EnvConfig {
    EnvConfig::square(config.grid_size, config.density, k, 0, config.adversaries)
}

fn train_setup<'a>(config: &'a RunConfig, env: &'a EnvConfig, index: usize) -> EpisodeSetup<'a> {
    EpisodeSetup {
        env,
        seed: config.seed,
        episode_index: index as u64,
        timesteps: config.timesteps,
        adversary_radius: config.adversary_radius,
        weights: &config.reward,
        record_timing: config.record_timing,
    }
}

/// Training episodes in lifetime order, for the lifetime column only; no
/// sharing ever happens.
fn episode_indices(config: &RunConfig) -> impl Iterator<Item = (usize, usize)> {
    let per = config.episodes_per_lifetime;
    (0..config.training_episodes()).map(move |i| (i, i / per + 1))
}

#[derive(Debug, Clone)]
pub struct MarlOutcome {
    pub agents: Vec<ParameterSet>,
    pub stats: Vec<EpisodeStats>,
}

/// `k` independent learners, each with its own network, replay memory and
/// ε schedule.
pub fn marl_train(config: &RunConfig) -> Result<MarlOutcome, RunError> {
    config.validate()?;
    let k = config.baseline_agents();
    let spec = config.network(1);
    let mut agents: Vec<DqnAgent> = (0..k)
        .map(|i| DqnAgent::new(spec.clone(), config.dqn.clone(), config.seed, i as u64))
        .collect::<Result<_, _>>()?;
    let env = baseline_env(config, k);
    let mut stats = Vec::with_capacity(config.training_episodes());
    for (index, lifetime) in episode_indices(config) {
        let mut squad = Squad {
            spec: &spec,
            radius: config.radius,
            members: agents.iter_mut().map(Member::learner).collect(),
        };
        let result = run_episode(&train_setup(config, &env, index), &mut squad)?;
        for a in &mut agents {
            a.end_episode();
        }
        stats.push(episode_stats(result, index, lifetime, Phase::Train));
    }
    Ok(MarlOutcome {
        agents: agents.into_iter().map(DqnAgent::into_params).collect(),
        stats,
    })
}

pub fn marl_evaluate(config: &RunConfig, agents: &[ParameterSet]) -> Result<Vec<EpisodeStats>, RunError> {
    config.validate()?;
    let spec = config.network(1);
    for p in agents {
        spec.check_params(p)?;
    }
    let env = baseline_env(config, agents.len());
    (0..config.eval_episodes)
        .map(|e| {
            let mut squad = Squad {
                spec: &spec,
                radius: config.radius,
                members: agents.iter().map(Member::Frozen).collect(),
            };
            let result = run_episode(&eval_setup(config, &env, e), &mut squad)?;
            Ok(episode_stats(result, e, 0, Phase::Eval))
        })
        .collect()
}

/// Observations of agents `0..k`, stacked channel-wise in id order.
pub fn joint_observation(world: &GridWorld, k: usize, radius: usize) -> Result<Observation, RunError> {
    let parts = (0..k)
        .map(|id| world.observe(id, radius))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Observation::stack(&parts))
}

/// Greedy action per head of a multi-head Q-vector.
pub fn per_head_greedy(q: &[f32]) -> Vec<Action> {
    q.chunks_exact(Action::COUNT).map(greedy_action).collect()
}

enum CentralModel<'a> {
    Learning(&'a mut DqnAgent<JointExperience>),
    Frozen(&'a ParameterSet),
}

struct PendingJoint {
    state: Observation,
    actions: Vec<Action>,
    reward: f32,
}

/// Chooses every friendly move at the start of the timestep from the
/// stacked observations; the joint reward is the sum of individual ones.
struct CentralTeam<'a> {
    spec: &'a NetworkSpec,
    model: CentralModel<'a>,
    k: usize,
    radius: usize,
    actions: Vec<Action>,
    pending: Option<PendingJoint>,
}

impl Controller for CentralTeam<'_> {
    fn begin_timestep(&mut self, world: &GridWorld) -> Result<(), RunError> {
        let joint = joint_observation(world, self.k, self.radius)?;
        self.actions = match &mut self.model {
            CentralModel::Frozen(params) => per_head_greedy(&forward_observations(self.spec, params, &[&joint])?),
            CentralModel::Learning(agent) => {
                if let Some(p) = self.pending.take() {
                    agent.remember(JointExperience {
                        state: p.state,
                        actions: p.actions,
                        reward: p.reward,
                        next_state: joint.clone(),
                        terminal: false,
                    });
                }
                let actions = agent.act_heads(&joint)?;
                self.pending = Some(PendingJoint {
                    state: joint,
                    actions: actions.clone(),
                    reward: 0.0,
                });
                actions
            }
        };
        Ok(())
    }

    fn choose(&mut self, _world: &GridWorld, id: usize) -> Result<Action, RunError> {
        self.actions
            .get(id)
            .copied()
            .ok_or_else(|| RunError::Invalid(format!("no head for friendly agent {id}")))
    }

    fn rewarded(&mut self, _id: usize, reward: &RewardBreakdown) {
        if let Some(p) = &mut self.pending {
            p.reward += reward.total as f32;
        }
    }

    fn end_timestep(&mut self, world: &GridWorld, last: bool) -> Result<(), RunError> {
        if let CentralModel::Learning(agent) = &mut self.model {
            if last {
                if let Some(p) = self.pending.take() {
                    agent.remember(JointExperience {
                        state: p.state,
                        actions: p.actions,
                        reward: p.reward,
                        next_state: joint_observation(world, self.k, self.radius)?,
                        terminal: true,
                    });
                }
            }
            agent.learn()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CentralOutcome {
    pub params: ParameterSet,
    pub stats: Vec<EpisodeStats>,
}

/// One network with `3k` input channels and `k` four-way heads.
pub fn central_train(config: &RunConfig) -> Result<CentralOutcome, RunError> {
    config.validate()?;
    let k = config.baseline_agents();
    let spec = config.network(k);
    let mut agent: DqnAgent<JointExperience> = DqnAgent::new(spec.clone(), config.dqn.clone(), config.seed, 0)?;
    let env = baseline_env(config, k);
    let mut stats = Vec::with_capacity(config.training_episodes());
    for (index, lifetime) in episode_indices(config) {
        let mut team = CentralTeam {
            spec: &spec,
            model: CentralModel::Learning(&mut agent),
            k,
            radius: config.radius,
            actions: Vec::new(),
            pending: None,
        };
        let result = run_episode(&train_setup(config, &env, index), &mut team)?;
        agent.end_episode();
        stats.push(episode_stats(result, index, lifetime, Phase::Train));
    }
    Ok(CentralOutcome {
        params: agent.into_params(),
        stats,
    })
}

pub fn central_evaluate(config: &RunConfig, params: &ParameterSet) -> Result<Vec<EpisodeStats>, RunError> {
    config.validate()?;
    let k = config.baseline_agents();
    let spec = config.network(k);
    spec.check_params(params)?;
    let env = baseline_env(config, k);
    (0..config.eval_episodes)
        .map(|e| {
            let mut team = CentralTeam {
                spec: &spec,
                model: CentralModel::Frozen(params),
                k,
                radius: config.radius,
                actions: Vec::new(),
                pending: None,
            };
            let result = run_episode(&eval_setup(config, &env, e), &mut team)?;
            Ok(episode_stats(result, e, 0, Phase::Eval))
        })
        .collect()
}
