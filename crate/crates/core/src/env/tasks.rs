//! Built-in causal tasks.

use super::{EnvError, Mdp, Pomdp};
use crate::space::ProductSpace;

/// Food dispenser layout: state axes and action indices.
pub mod dispenser {
    pub const BUTTON: usize = 0;
    pub const MECHANISM: usize = 1;
    pub const OBSTRUCTION: usize = 2;
    pub const FOOD: usize = 3;
    /// Present only in the confounded variant; hidden from observations.
    pub const WEIGHT: usize = 4;

    pub const PRESS: usize = 0;
    pub const CLEAR: usize = 1;
    pub const REACH: usize = 2;
    pub const NOOP: usize = 3;
    pub const N_ACTIONS: usize = 4;

    pub const DISCOUNT: f64 = 0.95;
}

/// Trap tube layout: state axes and action indices.
pub mod trap_tube {
    pub const REWARD_POS: usize = 0;
    pub const TRAP_POS: usize = 1;
    pub const TRAP_EFFECTIVE: usize = 2;

    pub const PUSH_LEFT: usize = 0;
    pub const PUSH_RIGHT: usize = 1;
    pub const N_ACTIONS: usize = 2;

    pub const DISCOUNT: f64 = 0.95;
}

/// Food dispenser. All factors update from the previous time slice:
///
/// * `button' = [action = press]`
/// * `mechanism' = button` (and `weight`, when confounded)
/// * `obstruction' = 0` after `clear`, otherwise `obstruction` flipped with
///   probability `obstruction_flip_prob`
/// * `food' = mechanism ∧ ¬obstruction`
///
/// `reach` pays 1 when `food = 1`. Episodes start from all zeros; the hidden
/// weight is a fair coin that stays fixed. The observation is the first four
/// factors.
pub fn build_dispenser_task(obstruction_flip_prob: f64, confound_weight: bool) -> Result<Pomdp, EnvError> {
    use dispenser::*;
    if !(0.0..=1.0).contains(&obstruction_flip_prob) {
        return Err(EnvError::OutOfRange(format!("obstruction flip probability {obstruction_flip_prob}")));
    }
    let axes = if confound_weight { vec![2; 5] } else { vec![2; 4] };
    let states = ProductSpace::new(axes)?;
    let n = states.size();
    let mut transition = vec![0.0; n * N_ACTIONS * n];
    let mut reward = vec![0.0; n * N_ACTIONS];
    for (s, x) in states.iter().enumerate() {
        let weight = if confound_weight { x[WEIGHT] } else { 1 };
        for a in 0..N_ACTIONS {
            let mut next = x.clone();
            next[BUTTON] = usize::from(a == PRESS);
            next[MECHANISM] = x[BUTTON] & weight;
            next[FOOD] = x[MECHANISM] & (1 - x[OBSTRUCTION]);
            let branches: Vec<(usize, f64)> = if a == CLEAR {
                vec![(0, 1.0)]
            } else {
                vec![(x[OBSTRUCTION], 1.0 - obstruction_flip_prob), (1 - x[OBSTRUCTION], obstruction_flip_prob)]
            };
            let row = (s * N_ACTIONS + a) * n;
            for (obstruction, p) in branches {
                next[OBSTRUCTION] = obstruction;
                transition[row + states.encode(&next)?] += p;
            }
            if a == REACH && x[FOOD] == 1 {
                reward[s * N_ACTIONS + a] = 1.0;
            }
        }
    }
    let mut initial = vec![0.0; n];
    if confound_weight {
        let mut x = vec![0; 5];
        for w in 0..2 {
            x[WEIGHT] = w;
            initial[states.encode(&x)?] = 0.5;
        }
    } else {
        initial[0] = 1.0;
    }
    let base = Mdp::new(states.clone(), N_ACTIONS, transition, reward, DISCOUNT, initial)?;

    let observations = ProductSpace::new(vec![2; 4])?;
    let o = observations.size();
    let mut measurement = vec![0.0; n * o];
    for (s, x) in states.iter().enumerate() {
        measurement[s * o + observations.encode(&x[..4])?] = 1.0;
    }
    Pomdp::new(base, observations, measurement)
}

/// Trap tube of `length` cells. Cells `0` and `length - 1` are the two open
/// ends; the reward starts strictly inside, away from the trap.
///
/// Pushing the reward out of either end pays 1. Pushing it onto an
/// effective trap loses it (reward 0). Both end the episode. An ineffective
/// (inverted) trap is crossed like any other cell.
pub fn build_trap_tube_task(length: usize, trap_effective: bool) -> Result<Mdp, EnvError> {
    use trap_tube::*;
    if length < 3 {
        return Err(EnvError::OutOfRange(format!("tube length {length}")));
    }
    let states = ProductSpace::new(vec![length, length, 2])?;
    let n = states.size();
    let is_end = |pos: usize| pos == 0 || pos == length - 1;
    let terminal: Vec<bool> = states
        .iter()
        .map(|x| is_end(x[REWARD_POS]) || (x[TRAP_EFFECTIVE] == 1 && x[REWARD_POS] == x[TRAP_POS]))
        .collect();

    let mut transition = vec![0.0; n * N_ACTIONS * n];
    let mut reward = vec![0.0; n * N_ACTIONS];
    for (s, x) in states.iter().enumerate() {
        for a in 0..N_ACTIONS {
            let row = (s * N_ACTIONS + a) * n;
            if terminal[s] {
                transition[row + s] = 1.0;
                continue;
            }
            let mut next = x.clone();
            next[REWARD_POS] = if a == PUSH_LEFT { x[REWARD_POS] - 1 } else { x[REWARD_POS] + 1 };
            transition[row + states.encode(&next)?] = 1.0;
            if is_end(next[REWARD_POS]) {
                reward[s * N_ACTIONS + a] = 1.0;
            }
        }
    }

    let effective = usize::from(trap_effective);
    let starts: Vec<usize> = states
        .iter()
        .enumerate()
        .filter(|(_, x)| {
            x[TRAP_EFFECTIVE] == effective
                && !is_end(x[REWARD_POS])
                && !is_end(x[TRAP_POS])
                && x[REWARD_POS] != x[TRAP_POS]
        })
        .map(|(s, _)| s)
        .collect();
    let mut initial = vec![0.0; n];
    for &s in &starts {
        initial[s] = 1.0 / starts.len() as f64;
    }
    // length 3 has a single interior cell, so the trap must sit on an end
    if starts.is_empty() {
        for x in states.iter().filter(|x| x[TRAP_EFFECTIVE] == effective && x[REWARD_POS] == 1 && x[TRAP_POS] == 0) {
            initial[states.encode(&x)?] = 1.0;
        }
    }
    Mdp::new(states, N_ACTIONS, transition, reward, DISCOUNT, initial)?.with_terminal(terminal)
}
