//! Independent f64 reference implementations shared by the integration
//! tests.

#![allow(dead_code)]

use forage::dqn::{DqnAgent, DqnConfig};
use forage::episode::{play, EpisodeSetup};
use forage::grid::{Cell, EnvConfig, GridWorld, Observation, Team};
use forage::neural::{Layer, NetworkSpec, ParameterSet, Target};
use forage::orchestrator::{greedy_move, Member, Squad};
use forage::reward::RewardWeights;

/// Straightforward f64 evaluation of a conv/relu/dense stack.
pub fn reference_loss(spec: &NetworkSpec, params: &[Vec<f64>], input: &[f64], batch: usize, targets: &[Target]) -> f64 {
    let in_len = spec.input_len();
    let mut q_all = Vec::new();
    for b in 0..batch {
        let mut channels = spec.input_channels;
        let mut side = spec.input_side;
        let mut x = input[b * in_len..(b + 1) * in_len].to_vec();
        let mut p = 0;
        for layer in &spec.layers {
            match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    let (w, bias) = (&params[p], &params[p + 1]);
                    p += 2;
                    let out_side = side + 2 * padding + 1 - kernel;
                    let mut y = vec![0.0; out_channels * out_side * out_side];
                    for co in 0..out_channels {
                        for oy in 0..out_side {
                            for ox in 0..out_side {
                                let mut acc = bias[co];
                                for ci in 0..channels {
                                    for ky in 0..kernel {
                                        for kx in 0..kernel {
                                            let iy = (oy + ky) as i64 - padding as i64;
                                            let ix = (ox + kx) as i64 - padding as i64;
                                            if iy < 0 || ix < 0 || iy >= side as i64 || ix >= side as i64 {
                                                continue;
                                            }
                                            let wv = w[((co * channels + ci) * kernel + ky) * kernel + kx];
                                            acc += wv * x[(ci * side + iy as usize) * side + ix as usize];
                                        }
                                    }
                                }
                                y[(co * out_side + oy) * out_side + ox] = acc;
                            }
                        }
                    }
                    x = y;
                    channels = out_channels;
                    side = out_side;
                }
                Layer::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
                Layer::Dense { out } => {
                    let (w, bias) = (&params[p], &params[p + 1]);
                    p += 2;
                    let n_in = x.len();
                    x = (0..out)
                        .map(|o| bias[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>())
                        .collect();
                }
            }
        }
        q_all.push(x);
    }
    targets
        .iter()
        .map(|t| (q_all[t.sample][t.output] - f64::from(t.value)).powi(2))
        .sum::<f64>()
        / batch as f64
}

/// Largest relative error between `analytic` gradients and f64 central
/// differences of [`reference_loss`], with `floor` bounding the denominator
/// from below. Also returns the number of parameters compared.
pub fn finite_difference_worst(
    spec: &NetworkSpec,
    params: &ParameterSet,
    analytic: &ParameterSet,
    input: &[f32],
    batch: usize,
    targets: &[Target],
    floor: f64,
) -> (f64, usize) {
    let mut reference: Vec<Vec<f64>> = params
        .entries()
        .iter()
        .map(|p| p.values.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let input: Vec<f64> = input.iter().map(|&v| f64::from(v)).collect();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (e, entry) in analytic.entries().iter().enumerate() {
        for i in 0..entry.values.len() {
            let orig = reference[e][i];
            reference[e][i] = orig + h;
            let up = reference_loss(spec, &reference, &input, batch, targets);
            reference[e][i] = orig - h;
            let down = reference_loss(spec, &reference, &input, batch, targets);
            reference[e][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let got = f64::from(entry.values[i]);
            worst = worst.max((got - numeric).abs() / got.abs().max(numeric.abs()).max(floor));
            checked += 1;
        }
    }
    (worst, checked)
}

pub const CORRIDOR_TIMESTEPS: usize = 30;
pub const CORRIDOR_HIDDEN: usize = 32;

/// A `len × 1` corridor: leader at the left end, one resource at the right.
pub fn corridor_world(len: usize, seed: u64) -> GridWorld {
    GridWorld::from_layout(
        len,
        1,
        &[Cell::new(len - 1, 0)],
        &[(Team::Leader, Cell::new(0, 0))],
        seed,
    )
    .unwrap()
}

/// Trains a lone leader for 200 corridor episodes and reports whether its
/// greedy policy then walks straight to the resource.
pub fn corridor_solved(len: usize, seed: u64) -> bool {
    let radius = len - 1;
    let env = EnvConfig::square(len, 0.0, 1, 0, 0);
    let weights = RewardWeights::default();
    let spec = NetworkSpec::with_widths(Observation::CHANNELS, radius, &[], CORRIDOR_HIDDEN, 1);
    let mut agent: DqnAgent = DqnAgent::new(spec.clone(), DqnConfig::default(), seed, 0).unwrap();
    for episode in 0..200u64 {
        let setup = EpisodeSetup {
            env: &env,
            seed,
            episode_index: episode,
            timesteps: CORRIDOR_TIMESTEPS,
            adversary_radius: 1,
            weights: &weights,
            record_timing: false,
        };
        let mut squad = Squad {
            spec: &spec,
            radius,
            members: vec![Member::learner(&mut agent)],
        };
        play(corridor_world(len, seed * 1000 + episode), &setup, &mut squad).unwrap();
        agent.end_episode();
    }
    let mut world = corridor_world(len, 0);
    let mut steps = 0;
    while world.resources_remaining() > 0 && steps < 3 * len {
        let obs = world.observe(0, radius).unwrap();
        world
            .step_agent(0, greedy_move(&spec, agent.params(), &obs).unwrap())
            .unwrap();
        steps += 1;
    }
    world.resources_remaining() == 0 && steps == len - 1
}
