//! Random model generation for property checks and experiments.

use super::{Assignment, Emission, NoiseSpec, Scm, VariableId};
use crate::rng::{self, SimRng};
use crate::space::FiniteDomain;

/// Shape of a random model.
#[derive(Debug, Clone, Copy)]
pub struct RandomScmShape {
    pub factors: usize,
    pub confounders: usize,
    /// Every factor and confounder has this cardinality.
    pub cardinality: usize,
    /// Noise domains are drawn from `1..=max_noise`.
    pub max_noise: usize,
    /// Probability that an earlier variable is chosen as a parent.
    pub edge_probability: f64,
    /// Adds a two-valued observation noise that can corrupt the emission.
    pub noisy_emission: bool,
}

impl Default for RandomScmShape {
    fn default() -> Self {
        Self {
            factors: 3,
            confounders: 1,
            cardinality: 2,
            max_noise: 3,
            edge_probability: 0.5,
            noisy_emission: false,
        }
    }
}

fn random_distribution(rng: &mut SimRng, k: usize) -> Vec<f64> {
    // bounded away from zero so every value is reachable
    let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng::uniform(rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let head: f64 = probs[..k - 1].iter().sum();
    probs[k - 1] = 1.0 - head;
    probs
}

/// Generates a valid model. Factors are ordered causally by a random
/// permutation, so factor indices are not a topological order in general.
pub fn random_scm(seed: u64, shape: RandomScmShape) -> Scm {
    let mut rng = rng::seeded(seed);
    let n = shape.factors;
    let m = shape.confounders;
    let c = shape.cardinality;

    // random causal order over factor indices (Fisher-Yates)
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng::below(&mut rng, i + 1);
        order.swap(i, j);
    }

    let confounder_dists = (0..m).map(|_| NoiseSpec::new(random_distribution(&mut rng, c))).collect();
    let mut factor_noises = vec![NoiseSpec::point_mass(); n];
    let mut assignments: Vec<Option<Assignment>> = vec![None; n];
    for (pos, &j) in order.iter().enumerate() {
        let mut parents = Vec::new();
        for &earlier in &order[..pos] {
            if rng::uniform(&mut rng) < shape.edge_probability {
                parents.push(VariableId::factor(earlier));
            }
        }
        for k in 0..m {
            if rng::uniform(&mut rng) < shape.edge_probability {
                parents.push(VariableId::confounder(k));
            }
        }
        let noise_card = 1 + rng::below(&mut rng, shape.max_noise);
        factor_noises[j] = NoiseSpec::new(random_distribution(&mut rng, noise_card));
        let rows = c.pow(parents.len() as u32) * noise_card;
        let table = (0..rows).map(|_| rng::below(&mut rng, c)).collect();
        assignments[j] = Some(Assignment { target: VariableId::factor(j), parents, table });
    }

    let cards = vec![c; n];
    let size: usize = cards.iter().product();
    let emission = if shape.noisy_emission {
        let mut table = Vec::with_capacity(size * 2);
        for s in 0..size {
            table.push(s);
            table.push(rng::below(&mut rng, size));
        }
        Emission {
            domain: FiniteDomain::new(size).expect("non-empty"),
            noise: NoiseSpec::new(vec![0.9, 0.1]),
            table,
        }
    } else {
        Scm::identity_emission(&cards)
    };

    Scm {
        factor_domains: cards.iter().map(|&k| FiniteDomain::new(k).expect("positive")).collect(),
        confounder_domains: (0..m).map(|_| FiniteDomain::new(c).expect("positive")).collect(),
        confounder_dists,
        factor_noises,
        assignments: assignments.into_iter().map(|a| a.expect("every factor assigned")).collect(),
        emission,
    }
}
