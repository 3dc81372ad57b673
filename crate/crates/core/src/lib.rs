//! Grid-world foraging with one deep-Q leader that periodically hands
//! mutated copies of its model to non-learning allies, competing with
//! greedy adversaries; plus independent-learner and centralized baselines.
//!
//! The crate is organised bottom-up: [`grid`] and [`reward`] define the
//! world, [`neural`] and [`dqn`] the learner, [`adversary`] and [`sharing`]
//! the other agents' behaviour, and [`orchestrator`], [`baselines`],
//! [`stats`] and [`commands`] the experiment harness.

pub mod adversary;
pub mod baselines;
pub mod commands;
pub mod config;
pub mod dqn;
pub mod episode;
pub mod grid;
pub mod neural;
pub mod orchestrator;
pub mod reward;
pub mod rng;
pub mod sharing;
pub mod stats;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/reward.md")]
    mod reward {}
    #[doc = include_str!("../../../book/src/adversaries.md")]
    mod adversaries {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/sharing.md")]
    mod sharing {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
