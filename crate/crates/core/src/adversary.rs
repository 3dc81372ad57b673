//! Greedy opponents: head for the closest visible resource, wander at
//! random when none is in view.

use rand::Rng;

use crate::grid::{Action, Observation};

/// Window offset `(row, col)` relative to the centre; negative rows are up.
pub type Offset = (i64, i64);

/// The closest visible resource as an offset from the centre.
///
/// Distance ties go to the lowest row-major window index. The centre cell
/// itself is never a target, since no move can get closer to it.
pub fn adversary_target(observation: &Observation) -> Option<Offset> {
    let side = observation.side();
    let r = observation.radius() as i64;
    let mut best: Option<(u64, Offset)> = None;
    for row in 0..side {
        for col in 0..side {
            if observation.get(Observation::RESOURCES, row, col) == 0 {
                continue;
            }
            let offset = (row as i64 - r, col as i64 - r);
            let d = offset.0.unsigned_abs() + offset.1.unsigned_abs();
            if d == 0 {
                continue;
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, offset));
            }
        }
    }
    best.map(|(_, offset)| offset)
}

/// First move in the order Up, Down, Left, Right that shortens the distance
/// to `target`, if any.
pub fn reducing_action(target: Offset) -> Option<Action> {
    let (dy, dx) = target;
    Action::ALL.into_iter().find(|a| {
        let (mx, my) = a.delta();
        (dy - my).abs() + (dx - mx).abs() < dy.abs() + dx.abs()
    })
}

pub fn adversary_action(observation: &Observation, rng: &mut impl Rng) -> Action {
    adversary_target(observation)
        .and_then(reducing_action)
        .unwrap_or_else(|| Action::random(rng))
}
