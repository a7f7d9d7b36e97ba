//! Reward-inclusive bisimulation by partition refinement.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EnvError, Mdp};
use crate::rng;
use crate::space::ProductSpace;

/// Rewards and block masses are compared after rounding to this resolution.
const QUANTUM: f64 = 1e9;

fn quantize(x: f64) -> i64 {
    (x * QUANTUM).round() as i64
}

/// A labelling of states by block. Block ids are numbered in order of their
/// smallest member state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Partition {
    block_of: Vec<usize>,
}

impl Partition {
    /// Relabels arbitrary block labels into canonical form.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut ids = HashMap::new();
        let block_of = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(*l).or_insert(next)
            })
            .collect();
        Partition { block_of }
    }

    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.block_of.iter().max().map_or(0, |m| m + 1)
    }

    pub fn members(&self, block: usize) -> Vec<usize> {
        (0..self.block_of.len()).filter(|&s| self.block_of[s] == block).collect()
    }
}

/// The coarsest partition in which same-block states have equal rewards for
/// every action and equal transition mass into every block for every action.
pub fn bisimulation_partition(mdp: &Mdp) -> Partition {
    let n = mdp.n_states();
    let mut partition = Partition { block_of: vec![0; n] };
    loop {
        let blocks = partition.n_blocks();
        let signatures: Vec<(usize, Vec<i64>)> = (0..n)
            .map(|s| {
                let mut sig = Vec::with_capacity(mdp.n_actions() * (blocks + 1));
                for a in 0..mdp.n_actions() {
                    sig.push(quantize(mdp.reward(s, a)));
                    let mut mass = vec![0.0; blocks];
                    for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                        mass[partition.block_of[next]] += p;
                    }
                    sig.extend(mass.into_iter().map(quantize));
                }
                (partition.block_of[s], sig)
            })
            .collect();
        let refined = Partition::from_labels(&intern(&signatures));
        if refined.n_blocks() == blocks {
            return refined;
        }
        partition = refined;
    }
}

fn intern<T: std::hash::Hash + Eq>(keys: &[T]) -> Vec<usize> {
    let mut ids: HashMap<&T, usize> = HashMap::new();
    keys.iter()
        .map(|k| {
            let next = ids.len();
            *ids.entry(k).or_insert(next)
        })
        .collect()
}

/// A random MDP built around a hidden lumpable structure, then perturbed so
/// that some hidden blocks split. Probabilities are multiples of 1/64 and
/// rewards take values in `0..reward_levels`, so block masses compare exactly.
pub fn random_lumpable_mdp(seed: u64, n_states: usize, n_actions: usize, reward_levels: usize) -> Result<Mdp, EnvError> {
    if n_states == 0 || reward_levels == 0 {
        return Err(EnvError::OutOfRange("empty state or reward set".into()));
    }
    let mut r = rng::seeded(seed);
    let draw = 1 + rng::below(&mut r, n_states);
    let labels: Vec<usize> = (0..n_states).map(|_| rng::below(&mut r, draw)).collect();
    let hidden = Partition::from_labels(&labels).block_of;
    let k = hidden.iter().max().map_or(1, |m| m + 1);
    let members: Vec<Vec<usize>> = (0..k).map(|b| (0..n_states).filter(|&s| hidden[s] == b).collect()).collect();

    // split `units` sixty-fourths over `slots` at random
    let mut spread = |units: usize, slots: usize| -> Vec<usize> {
        let mut out = vec![0; slots];
        for _ in 0..units {
            out[rng::below(&mut r, slots)] += 1;
        }
        out
    };

    let mut block_reward = vec![0usize; k * n_actions];
    let mut block_mass = vec![0usize; k * n_actions * k];
    for b in 0..k {
        for a in 0..n_actions {
            let row = (b * n_actions + a) * k;
            block_mass[row..row + k].copy_from_slice(&spread(8, k));
        }
    }
    let mut rs = rng::seeded(rng::derive_seed(seed, 1));
    for x in block_reward.iter_mut() {
        *x = rng::below(&mut rs, reward_levels);
    }

    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        let b = hidden[s];
        for a in 0..n_actions {
            let row = (s * n_actions + a) * n_states;
            let perturb = rng::uniform(&mut rs) < 0.1;
            for c in 0..k {
                let units = 8 * block_mass[(b * n_actions + a) * k + c];
                for (i, u) in spread(units, members[c].len()).into_iter().enumerate() {
                    transition[row + members[c][i]] = u as f64 / 64.0;
                }
            }
            reward[s * n_actions + a] = block_reward[b * n_actions + a] as f64;
            if perturb {
                reward[s * n_actions + a] = rng::below(&mut rs, reward_levels) as f64;
            }
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    Mdp::new(ProductSpace::flat(n_states)?, n_actions, transition, reward, 0.9, initial)
}
