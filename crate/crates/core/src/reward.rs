//! Composite collection reward with adversary-proximity and ally-distance
//! shaping.
//!
//! A collection pays `R_c`, scaled up by `w_e · R_e + w_a · R_a`:
//!
//! * `R_e = Σ_j (1 − d(agent, adversary_j) / D)` grows as the agent collects
//!   near adversaries,
//! * `R_a = Σ_k d(agent, ally_k) / D` grows as it collects away from allies,
//!
//! where `d` is Manhattan distance and `D` the largest distance on the grid.
//! Steps without a collection pay nothing at all.

use std::ops::AddAssign;

use thiserror::Error;

use crate::grid::{manhattan, Cell};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("distance normaliser must be positive")]
    NonPositiveNormaliser,
    #[error("invalid reward weights: {0}")]
    InvalidWeights(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    /// Base reward paid for a collection.
    pub collect: f64,
    /// Weight of the adversary-proximity term.
    pub adversary: f64,
    /// Weight of the ally-distance term.
    pub ally: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            collect: 1.0,
            adversary: 0.5,
            ally: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.collect > 0.0 && self.collect.is_finite()) {
            return Err(RewardError::InvalidWeights("collection reward must be positive"));
        }
        if !(self.adversary >= 0.0 && self.adversary.is_finite()) {
            return Err(RewardError::InvalidWeights("adversary weight must be non-negative"));
        }
        if !(self.ally >= 0.0 && self.ally.is_finite()) {
            return Err(RewardError::InvalidWeights("ally weight must be non-negative"));
        }
        Ok(())
    }
}

/// Reward split into its components; `total = base + from_re + from_ra`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub total: f64,
    pub base: f64,
    pub from_re: f64,
    pub from_ra: f64,
}

impl AddAssign for RewardBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        self.total += rhs.total;
        self.base += rhs.base;
        self.from_re += rhs.from_re;
        self.from_ra += rhs.from_ra;
    }
}

impl RewardBreakdown {
    /// Share of the shaping reward that came from ally distance, or `None`
    /// when no shaping reward was earned.
    pub fn ally_share(&self) -> Option<f64> {
        let shaping = self.from_ra + self.from_re;
        (shaping > 0.0).then(|| self.from_ra / shaping)
    }
}

/// Adversary-proximity term `Σ (1 − d/D)`.
pub fn shaping_re(agent: Cell, adversaries: &[Cell], max_distance: usize) -> Result<f64, RewardError> {
    if max_distance == 0 {
        return Err(RewardError::NonPositiveNormaliser);
    }
    let d = max_distance as f64;
    Ok(adversaries.iter().map(|&e| 1.0 - manhattan(agent, e) as f64 / d).sum())
}

/// Ally-distance term `Σ d/D`.
pub fn shaping_ra(agent: Cell, allies: &[Cell], max_distance: usize) -> Result<f64, RewardError> {
    if max_distance == 0 {
        return Err(RewardError::NonPositiveNormaliser);
    }
    let d = max_distance as f64;
    Ok(allies.iter().map(|&a| manhattan(agent, a) as f64 / d).sum())
}

pub fn total_reward(collected: bool, re: f64, ra: f64, weights: &RewardWeights) -> RewardBreakdown {
    if !collected {
        return RewardBreakdown::default();
    }
    let base = weights.collect;
    let from_re = base * weights.adversary * re;
    let from_ra = base * weights.ally * ra;
    RewardBreakdown {
        total: base + from_re + from_ra,
        base,
        from_re,
        from_ra,
    }
}

/// Full reward for one move, measured at the agent's post-move position.
pub fn reward_for_move(
    collected: bool,
    agent: Cell,
    allies: &[Cell],
    adversaries: &[Cell],
    max_distance: usize,
    weights: &RewardWeights,
) -> Result<RewardBreakdown, RewardError> {
    if !collected {
        return Ok(RewardBreakdown::default());
    }
    let re = shaping_re(agent, adversaries, max_distance)?;
    let ra = shaping_ra(agent, allies, max_distance)?;
    Ok(total_reward(true, re, ra, weights))
}
