//! Exact dynamic-programming solutions for finite MDPs.

use serde::{Deserialize, Serialize};

use crate::env::Mdp;

/// Optimal values and a greedy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleSolution {
    pub values: Vec<f64>,
    /// Greedy action per state, ties to the smallest action index.
    pub policy: Vec<usize>,
    pub iterations: usize,
}

impl OracleSolution {
    /// Expected optimal return from the MDP's initial distribution.
    pub fn initial_value(&self, mdp: &Mdp) -> f64 {
        mdp.initial().iter().zip(&self.values).map(|(p, v)| p * v).sum()
    }
}

/// `Q(s, a) = r(s, a) + γ Σ P(s'|s, a) V(s')`.
pub fn q_value(mdp: &Mdp, values: &[f64], s: usize, a: usize) -> f64 {
    let future: f64 = mdp.transition_row(s, a).iter().zip(values).map(|(p, v)| p * v).sum();
    mdp.reward(s, a) + mdp.discount() * future
}

fn greedy(mdp: &Mdp, values: &[f64], s: usize) -> (usize, f64) {
    let mut best = (0, q_value(mdp, values, s, 0));
    for a in 1..mdp.n_actions() {
        let q = q_value(mdp, values, s, a);
        // ties within rounding go to the smaller action
        if q > best.1 + 1e-12 * best.1.abs().max(1.0) {
            best = (a, q);
        }
    }
    best
}

/// Value iteration until the sup-norm change drops below `tolerance`.
pub fn value_iteration_oracle(mdp: &Mdp, tolerance: f64) -> OracleSolution {
    let n = mdp.n_states();
    let mut values = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next: Vec<f64> = (0..n).map(|s| greedy(mdp, &values, s).1).collect();
        let change = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        if change < tolerance {
            break;
        }
    }
    let policy = (0..n).map(|s| greedy(mdp, &values, s).0).collect();
    OracleSolution { values, policy, iterations }
}

/// Exact value of a fixed stochastic policy, `pi[s * A + a]`, by iterating
/// the Bellman expectation operator to `tolerance`.
pub fn policy_evaluation(mdp: &Mdp, pi: &[f64], tolerance: f64) -> Vec<f64> {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let mut values = vec![0.0; n];
    loop {
        let next: Vec<f64> =
            (0..n).map(|s| (0..na).map(|a| pi[s * na + a] * q_value(mdp, &values, s, a)).sum()).collect();
        let change = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        if change < tolerance {
            return values;
        }
    }
}
