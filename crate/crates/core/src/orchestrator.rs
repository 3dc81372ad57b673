//! The training protocol: lifetimes of episodes, a leader-only first
//! lifetime, mutated-model dissemination at every lifetime boundary, a
//! greedy evaluation phase, and the sharing-frequency sweep.

use crate::config::RunConfig;
use crate::dqn::{greedy_action, DqnAgent, Experience};
use crate::episode::{run_episode, Controller, EpisodeResult, EpisodeSetup, RunError};
use crate::grid::{Action, GridWorld, Observation};
use crate::neural::{forward_observations, NetworkSpec, ParameterSet};
use crate::reward::RewardBreakdown;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::sharing::disseminate;
use crate::stats::{Architecture, EpisodeStats, Phase, RunSummary};

/// Greedy move of a fixed single-head model.
pub fn greedy_move(spec: &NetworkSpec, params: &ParameterSet, observation: &Observation) -> Result<Action, RunError> {
    let q = forward_observations(spec, params, &[observation])?;
    Ok(greedy_action(&q))
}

pub struct Pending {
    state: Observation,
    action: Action,
    reward: f32,
}

/// A friendly agent driven by a single-head network.
pub enum Member<'a> {
    Learner {
        agent: &'a mut DqnAgent,
        pending: Option<Pending>,
    },
    Frozen(&'a ParameterSet),
}

impl<'a> Member<'a> {
    pub fn learner(agent: &'a mut DqnAgent) -> Self {
        Member::Learner { agent, pending: None }
    }
}

/// Friendly agents with ids `0..members.len()`, each with its own model.
///
/// A learner's transition is completed when it next observes, so its next
/// state is the world as it finds it on its following turn; the final
/// timestep's transition is terminal and closed at the end of the episode.
pub struct Squad<'a> {
    pub spec: &'a NetworkSpec,
    pub radius: usize,
    pub members: Vec<Member<'a>>,
}

impl Controller for Squad<'_> {
    fn choose(&mut self, world: &GridWorld, id: usize) -> Result<Action, RunError> {
        let obs = world.observe(id, self.radius)?;
        let member = self
            .members
            .get_mut(id)
            .ok_or_else(|| RunError::Invalid(format!("no model for friendly agent {id}")))?;
        match member {
            Member::Frozen(params) => greedy_move(self.spec, params, &obs),
            Member::Learner { agent, pending } => {
                if let Some(p) = pending.take() {
                    agent.remember(Experience {
                        state: p.state,
                        action: p.action,
                        reward: p.reward,
                        next_state: obs.clone(),
                        terminal: false,
                    });
                }
                let action = agent.act(&obs)?;
                *pending = Some(Pending {
                    state: obs,
                    action,
                    reward: 0.0,
                });
                Ok(action)
            }
        }
    }

    fn rewarded(&mut self, id: usize, reward: &RewardBreakdown) {
        if let Some(Member::Learner { pending: Some(p), .. }) = self.members.get_mut(id) {
            p.reward = reward.total as f32;
        }
    }

    fn end_timestep(&mut self, world: &GridWorld, last: bool) -> Result<(), RunError> {
        for (id, member) in self.members.iter_mut().enumerate() {
            if let Member::Learner { agent, pending } = member {
                if last {
                    if let Some(p) = pending.take() {
                        agent.remember(Experience {
                            state: p.state,
                            action: p.action,
                            reward: p.reward,
                            next_state: world.observe(id, self.radius)?,
                            terminal: true,
                        });
                    }
                }
                agent.learn()?;
            }
        }
        Ok(())
    }
}

pub fn episode_stats(result: EpisodeResult, episode: usize, lifetime: usize, phase: Phase) -> EpisodeStats {
    EpisodeStats {
        episode,
        lifetime,
        phase,
        friendly: result.friendly,
        adversary: result.adversary,
        win: result.friendly > result.adversary,
        agents: result.agents,
        timing: result.timing,
    }
}

pub fn run_id(architecture: Architecture, config: &RunConfig) -> String {
    format!(
        "{}-seed{}-L{}xE{}",
        architecture.as_str(),
        config.seed,
        config.lifetimes,
        config.episodes_per_lifetime
    )
}

/// Result of the learning phase.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub leader: ParameterSet,
    /// Models of the allies fielded in the last lifetime; empty when only
    /// one lifetime ran.
    pub allies: Vec<ParameterSet>,
    pub stats: Vec<EpisodeStats>,
    pub disseminations: usize,
}

pub fn run_training(config: &RunConfig) -> Result<TrainOutcome, RunError> {
    config.validate()?;
    let spec = config.network(1);
    let mut leader: DqnAgent = DqnAgent::new(spec.clone(), config.dqn.clone(), config.seed, 0)?;
    let mut allies: Vec<ParameterSet> = Vec::new();
    let mut stats = Vec::with_capacity(config.training_episodes());
    let mut disseminations = 0;
    for lifetime in 0..config.lifetimes {
        if lifetime > 0 {
            let mut rng = stream_rng(config.seed, Stream::Mutation, lifetime as u64);
            allies = disseminate(leader.params(), config.allies, config.mutation_sigma, &mut rng);
            disseminations += 1;
        }
        let env = config.env(allies.len());
        for e in 0..config.episodes_per_lifetime {
            let index = lifetime * config.episodes_per_lifetime + e;
            let setup = EpisodeSetup {
                env: &env,
                seed: config.seed,
                episode_index: index as u64,
                timesteps: config.timesteps,
                adversary_radius: config.adversary_radius,
                weights: &config.reward,
                record_timing: config.record_timing,
            };
            let mut members = vec![Member::learner(&mut leader)];
            members.extend(allies.iter().map(Member::Frozen));
            let mut squad = Squad {
                spec: &spec,
                radius: config.radius,
                members,
            };
            let result = run_episode(&setup, &mut squad)?;
            leader.end_episode();
            stats.push(episode_stats(result, index, lifetime + 1, Phase::Train));
        }
    }
    Ok(TrainOutcome {
        leader: leader.into_params(),
        allies,
        stats,
        disseminations,
    })
}

pub(crate) fn eval_setup<'a>(config: &'a RunConfig, env: &'a crate::grid::EnvConfig, e: usize) -> EpisodeSetup<'a> {
    EpisodeSetup {
        env,
        seed: config.seed,
        episode_index: (config.training_episodes() + e) as u64,
        timesteps: config.timesteps,
        adversary_radius: config.adversary_radius,
        weights: &config.reward,
        record_timing: false,
    }
}

/// Greedy play of fixed models for `eval_episodes` episodes, with as many
/// allies on the field as models given.
pub fn run_evaluation(
    config: &RunConfig,
    leader: &ParameterSet,
    allies: &[ParameterSet],
) -> Result<Vec<EpisodeStats>, RunError> {
    config.validate()?;
    let spec = config.network(1);
    for p in std::iter::once(leader).chain(allies) {
        spec.check_params(p)?;
    }
    let env = config.env(allies.len());
    let mut stats = Vec::with_capacity(config.eval_episodes);
    for e in 0..config.eval_episodes {
        let members = std::iter::once(leader).chain(allies).map(Member::Frozen).collect();
        let mut squad = Squad {
            spec: &spec,
            radius: config.radius,
            members,
        };
        let result = run_episode(&eval_setup(config, &env, e), &mut squad)?;
        stats.push(episode_stats(result, e, 0, Phase::Eval));
    }
    Ok(stats)
}

/// Parses `"10x40,20x20"` into `(lifetimes, episodes_per_lifetime)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>, RunError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let bad = || RunError::Invalid(format!("bad sweep pair `{s}`, expected LIFETIMESxEPISODES"));
            let (l, e) = s.split_once(['x', 'X']).ok_or_else(bad)?;
            let l: usize = l.trim().parse().map_err(|_| bad())?;
            let e: usize = e.trim().parse().map_err(|_| bad())?;
            if l == 0 || e == 0 {
                return Err(bad());
            }
            Ok((l, e))
        })
        .collect()
}

/// One configuration per pair, each with a seed derived from the base seed.
/// Every pair must keep the base configuration's training-episode total.
pub fn sweep_configs(base: &RunConfig, pairs: &[(usize, usize)]) -> Result<Vec<RunConfig>, RunError> {
    let total = base.training_episodes();
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(l, e))| {
            if l * e != total {
                return Err(RunError::Invalid(format!(
                    "sweep pair {l}x{e} has {} training episodes, expected {total}",
                    l * e
                )));
            }
            Ok(RunConfig {
                lifetimes: l,
                episodes_per_lifetime: e,
                seed: derive_seed(base.seed, Stream::Sweep, i as u64),
                ..base.clone()
            })
        })
        .collect()
}

/// One configuration of a sweep, trained and evaluated.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub config: RunConfig,
    pub training: TrainOutcome,
    pub evaluation: Vec<EpisodeStats>,
    pub summary: RunSummary,
}

pub fn train_and_evaluate(config: &RunConfig) -> Result<SweepRun, RunError> {
    let training = run_training(config)?;
    let evaluation = run_evaluation(config, &training.leader, &training.allies)?;
    let summary = RunSummary::from_episodes(
        &run_id(Architecture::Single, config),
        config.lifetimes,
        config.episodes_per_lifetime,
        config.seed,
        &evaluation,
    );
    Ok(SweepRun {
        config: config.clone(),
        training,
        evaluation,
        summary,
    })
}

pub fn run_sweep(base: &RunConfig, pairs: &[(usize, usize)]) -> Result<Vec<SweepRun>, RunError> {
    sweep_configs(base, pairs)?.iter().map(train_and_evaluate).collect()
}
