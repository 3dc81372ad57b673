//! End-of-lifetime model dissemination with Gaussian mutation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::neural::ParameterSet;

/// `v + σ·η` for every value, with `η` i.i.d. standard normal. `σ = 0`
/// returns an exact copy without drawing.
pub fn mutate(params: &ParameterSet, sigma: f64, rng: &mut impl Rng) -> ParameterSet {
    let mut out = params.clone();
    if sigma == 0.0 {
        return out;
    }
    for p in out.entries_mut() {
        for v in &mut p.values {
            let eta: f64 = rng.sample(StandardNormal);
            *v = (f64::from(*v) + sigma * eta) as f32;
        }
    }
    out
}

/// One independently mutated copy of the leader's model per ally.
pub fn disseminate(leader: &ParameterSet, allies: usize, sigma: f64, rng: &mut impl Rng) -> Vec<ParameterSet> {
    (0..allies).map(|_| mutate(leader, sigma, rng)).collect()
}
