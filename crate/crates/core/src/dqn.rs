//! Deep Q-learning: ε-greedy selection, experience replay, and the
//! bootstrapped squared-TD update against a periodically refreshed target
//! network.

use rand::Rng;
use thiserror::Error;

use crate::grid::{Action, Observation};
use crate::neural::{self, NetworkError, NetworkSpec, ParamError, ParameterSet, Target};
use crate::rng::{stream_rng, SimRng, Stream};

/// One stored transition of a single agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Observation,
    pub action: Action,
    pub reward: f32,
    pub next_state: Observation,
    /// Set only on the last timestep of an episode.
    pub terminal: bool,
}

/// A transition of a multi-head (centralized) controller: one action per head.
#[derive(Debug, Clone, PartialEq)]
pub struct JointExperience {
    pub state: Observation,
    pub actions: Vec<Action>,
    pub reward: f32,
    pub next_state: Observation,
    pub terminal: bool,
}

/// What the learner needs from a stored transition.
pub trait Transition {
    fn state(&self) -> &Observation;
    /// Chosen action for each output head, in head order.
    fn actions(&self) -> &[Action];
    fn reward(&self) -> f32;
    fn next_state(&self) -> &Observation;
    fn terminal(&self) -> bool;
}

impl Transition for Experience {
    fn state(&self) -> &Observation {
        &self.state
    }
    fn actions(&self) -> &[Action] {
        std::slice::from_ref(&self.action)
    }
    fn reward(&self) -> f32 {
        self.reward
    }
    fn next_state(&self) -> &Observation {
        &self.next_state
    }
    fn terminal(&self) -> bool {
        self.terminal
    }
}

impl Transition for JointExperience {
    fn state(&self) -> &Observation {
        &self.state
    }
    fn actions(&self) -> &[Action] {
        &self.actions
    }
    fn reward(&self) -> f32 {
        self.reward
    }
    fn next_state(&self) -> &Observation {
        &self.next_state
    }
    fn terminal(&self) -> bool {
        self.terminal
    }
}

/// Fixed-capacity ring buffer; once full, each insert evicts the oldest item.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
    inserted: u64,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            inserted: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of items ever inserted.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Stored items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// `n` distinct items drawn uniformly without replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<&T> {
        rand::seq::index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

/// `ε(t) = max(ε_min, ε₀ · decay^t)` over episode index `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub decay: f64,
    pub min: f64,
    episode: u64,
}

impl EpsilonSchedule {
    pub fn new(initial: f64, decay: f64, min: f64) -> Self {
        Self {
            initial,
            decay,
            min,
            episode: 0,
        }
    }

    /// Constant zero: pure exploitation.
    pub fn greedy() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    pub fn value_at(&self, episode: u64) -> f64 {
        let exp = i32::try_from(episode).unwrap_or(i32::MAX);
        (self.initial * self.decay.powi(exp)).max(self.min)
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn current(&self) -> f64 {
        self.value_at(self.episode)
    }

    /// Marks an episode complete and returns ε for the next one.
    pub fn decay_epsilon(&mut self) -> f64 {
        self.episode += 1;
        self.current()
    }
}

/// Greedy action from a 4-wide slice of Q-values; ties go to the lowest index.
pub fn greedy_action(q: &[f32]) -> Action {
    Action::from_index(neural::argmax(&q[..Action::COUNT])).expect("four actions")
}

/// With probability `epsilon` a uniform random action, otherwise the greedy
/// one. `epsilon == 0` consumes no randomness.
pub fn epsilon_greedy(q: &[f32], epsilon: f64, rng: &mut impl Rng) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Action::random(rng)
    } else {
        greedy_action(q)
    }
}

pub fn select_action(
    spec: &NetworkSpec,
    params: &ParameterSet,
    observation: &Observation,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<Action, NetworkError> {
    let q = neural::forward_observations(spec, params, &[observation])?;
    Ok(epsilon_greedy(&q, epsilon, rng))
}

/// One ε-greedy choice per output head.
pub fn select_actions(
    spec: &NetworkSpec,
    params: &ParameterSet,
    observation: &Observation,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Action>, NetworkError> {
    let q = neural::forward_observations(spec, params, &[observation])?;
    Ok(q.chunks_exact(Action::COUNT)
        .map(|head| epsilon_greedy(head, epsilon, rng))
        .collect())
}

/// `r` on terminal transitions, otherwise `r + γ · max_a' Q_target(s', a')`.
pub fn td_target(reward: f32, gamma: f32, max_next: f32, terminal: bool) -> f32 {
    if terminal {
        reward
    } else {
        reward + gamma * max_next
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("replay holds {have} transitions, need {need}; skipping update")]
    InsufficientReplay { have: usize, need: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub batch_size: usize,
    pub gamma: f32,
    pub learning_rate: f32,
}

/// Samples a minibatch, regresses the chosen Q-values onto their TD targets
/// (computed with `target_params`) and applies one SGD step to `params`.
/// Returns the minibatch loss before the update.
pub fn learn_step<T: Transition>(
    spec: &NetworkSpec,
    params: &mut ParameterSet,
    replay: &ReplayMemory<T>,
    config: &LearnConfig,
    target_params: &ParameterSet,
    rng: &mut impl Rng,
) -> Result<f32, LearnError> {
    let need = config.batch_size.max(1);
    if replay.len() < need {
        return Err(LearnError::InsufficientReplay {
            have: replay.len(),
            need,
        });
    }
    let batch = replay.sample(need, rng);
    let mut states = Vec::with_capacity(need * spec.input_len());
    let mut next_states = Vec::with_capacity(need * spec.input_len());
    for t in &batch {
        t.state().extend_f32(&mut states);
        t.next_state().extend_f32(&mut next_states);
    }
    let q_next = neural::forward(spec, target_params, &next_states, need)?;
    let width = q_next.len() / need;

    let mut targets = Vec::with_capacity(need * width / Action::COUNT);
    for (i, t) in batch.iter().enumerate() {
        let row = &q_next[i * width..(i + 1) * width];
        for (head, action) in t.actions().iter().enumerate() {
            let head_q = &row[head * Action::COUNT..(head + 1) * Action::COUNT];
            let max_next = head_q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            targets.push(Target {
                sample: i,
                output: head * Action::COUNT + action.index(),
                value: td_target(t.reward(), config.gamma, max_next, t.terminal()),
            });
        }
    }
    let (grads, loss) = neural::backward(spec, params, &states, need, &targets)?;
    params.apply_sgd(&grads, config.learning_rate)?;
    neural::recycle(grads);
    Ok(loss)
}

/// Hyperparameters of a learning agent.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_initial: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Learn steps between target-network refreshes; 1 disables the lag.
    pub target_refresh: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            discount: 0.8,
            epsilon_initial: 1.0,
            epsilon_decay: 0.995,
            epsilon_min: 0.1,
            replay_capacity: 10_000,
            batch_size: 32,
            target_refresh: 250,
        }
    }
}

/// A learner: online and target networks, replay memory and ε schedule.
#[derive(Debug, Clone)]
pub struct DqnAgent<T = Experience> {
    spec: NetworkSpec,
    params: ParameterSet,
    target: ParameterSet,
    replay: ReplayMemory<T>,
    schedule: EpsilonSchedule,
    config: DqnConfig,
    learn_steps: u64,
    explore_rng: SimRng,
    replay_rng: SimRng,
}

impl<T: Transition> DqnAgent<T> {
    /// Fresh agent with seeded initial weights; `index` separates the
    /// streams of agents that share a run seed.
    pub fn new(spec: NetworkSpec, config: DqnConfig, seed: u64, index: u64) -> Result<Self, NetworkError> {
        let params = spec.init_params(&mut stream_rng(seed, Stream::Init, index))?;
        Ok(Self::with_params(spec, params, config, seed, index))
    }

    pub fn with_params(spec: NetworkSpec, params: ParameterSet, config: DqnConfig, seed: u64, index: u64) -> Self {
        let schedule = EpsilonSchedule::new(config.epsilon_initial, config.epsilon_decay, config.epsilon_min);
        Self {
            target: params.clone(),
            params,
            replay: ReplayMemory::new(config.replay_capacity),
            schedule,
            learn_steps: 0,
            explore_rng: stream_rng(seed, Stream::Exploration, index),
            replay_rng: stream_rng(seed, Stream::Replay, index),
            spec,
            config,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    pub fn replay(&self) -> &ReplayMemory<T> {
        &self.replay
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.current()
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    /// ε-greedy choice for a single-head network.
    pub fn act(&mut self, observation: &Observation) -> Result<Action, NetworkError> {
        let eps = self.schedule.current();
        select_action(&self.spec, &self.params, observation, eps, &mut self.explore_rng)
    }

    /// ε-greedy choice per head.
    pub fn act_heads(&mut self, observation: &Observation) -> Result<Vec<Action>, NetworkError> {
        let eps = self.schedule.current();
        select_actions(&self.spec, &self.params, observation, eps, &mut self.explore_rng)
    }

    pub fn remember(&mut self, transition: T) {
        self.replay.push(transition);
    }

    /// One update if the replay is warm enough; `Ok(None)` means skipped.
    pub fn learn(&mut self) -> Result<Option<f32>, LearnError> {
        let cfg = LearnConfig {
            batch_size: self.config.batch_size,
            gamma: self.config.discount as f32,
            learning_rate: self.config.learning_rate as f32,
        };
        match learn_step(
            &self.spec,
            &mut self.params,
            &self.replay,
            &cfg,
            &self.target,
            &mut self.replay_rng,
        ) {
            Ok(loss) => {
                self.learn_steps += 1;
                if self
                    .learn_steps
                    .is_multiple_of(self.config.target_refresh.max(1) as u64)
                {
                    self.target.clone_from(&self.params);
                }
                Ok(Some(loss))
            }
            Err(LearnError::InsufficientReplay { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Advances the ε schedule at the end of an episode.
    pub fn end_episode(&mut self) -> f64 {
        self.schedule.decay_epsilon()
    }
}
