//! Finite MDPs and POMDPs with factored state spaces.
//!
//! States are flat indices into a [`ProductSpace`]; the factor tuple of a
//! state is `mdp.states().decode(s)`. Episode termination is encoded as an
//! absorbing, zero-reward state so every table stays total.

mod bisim;
mod factored;
mod tasks;

pub use bisim::{bisimulation_partition, random_lumpable_mdp, Partition};
pub use factored::{
    exact_parents, learn_factored_dynamics, random_action_transitions, FactoredTransition, Parent, TransitionDataset,
    TransitionRecord, DEFAULT_CMI_THRESHOLD,
};
pub use tasks::{build_dispenser_task, build_trap_tube_task, dispenser, trap_tube};

use thiserror::Error;

use crate::rng::{self, SimRng};
use crate::space::{ProductSpace, SpaceError};

/// Tolerance for transition, measurement and initial rows.
pub const ROW_TOLERANCE: f64 = 1e-12;
/// Tolerance for belief normalization.
pub const BELIEF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("{0} out of range")]
    OutOfRange(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{what} row {row} sums to {sum}")]
    Unnormalized { what: &'static str, row: usize, sum: f64 },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("terminal state {0} must be absorbing with zero reward")]
    BadTerminal(usize),
    #[error("observation {0} is impossible under the predicted belief")]
    ZeroLikelihood(usize),
    #[error("no transitions")]
    Empty,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

fn check_rows(what: &'static str, values: &[f64], width: usize) -> Result<(), EnvError> {
    if let Some(&bad) = values.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(EnvError::InvalidProbability(bad));
    }
    for (row, chunk) in values.chunks(width).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(EnvError::Unnormalized { what, row, sum });
        }
    }
    Ok(())
}

/// A finite MDP over a factored state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    states: ProductSpace,
    n_actions: usize,
    /// `transition[(s * A + a) * S + s']`
    transition: Vec<f64>,
    /// `reward[s * A + a]`
    reward: Vec<f64>,
    discount: f64,
    initial: Vec<f64>,
    terminal: Vec<bool>,
}

impl Mdp {
    pub fn new(
        states: ProductSpace,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial: Vec<f64>,
    ) -> Result<Self, EnvError> {
        let n = states.size();
        if n_actions == 0 {
            return Err(EnvError::OutOfRange("action count 0".into()));
        }
        if transition.len() != n * n_actions * n {
            return Err(EnvError::ShapeMismatch(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n * n_actions * n
            )));
        }
        if reward.len() != n * n_actions {
            return Err(EnvError::ShapeMismatch(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n * n_actions
            )));
        }
        if initial.len() != n {
            return Err(EnvError::ShapeMismatch(format!("initial has {} entries, expected {n}", initial.len())));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(EnvError::OutOfRange(format!("discount {discount}")));
        }
        if let Some(&bad) = reward.iter().find(|r| !r.is_finite()) {
            return Err(EnvError::OutOfRange(format!("reward {bad}")));
        }
        check_rows("transition", &transition, n)?;
        check_rows("initial", &initial, n)?;
        Ok(Mdp { states, n_actions, transition, reward, discount, initial, terminal: vec![false; n] })
    }

    /// Marks states where an episode ends. Each must be absorbing under every
    /// action and pay zero reward.
    pub fn with_terminal(mut self, terminal: Vec<bool>) -> Result<Self, EnvError> {
        if terminal.len() != self.n_states() {
            return Err(EnvError::ShapeMismatch(format!("terminal has {} entries", terminal.len())));
        }
        for (s, _) in terminal.iter().enumerate().filter(|(_, &t)| t) {
            for a in 0..self.n_actions {
                if self.transition_row(s, a)[s] != 1.0 || self.reward(s, a) != 0.0 {
                    return Err(EnvError::BadTerminal(s));
                }
            }
        }
        self.terminal = terminal;
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self, EnvError> {
        if !(0.0..1.0).contains(&discount) {
            return Err(EnvError::OutOfRange(format!("discount {discount}")));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self, EnvError> {
        if initial.len() != self.n_states() {
            return Err(EnvError::ShapeMismatch(format!("initial has {} entries", initial.len())));
        }
        check_rows("initial", &initial, initial.len())?;
        self.initial = initial;
        Ok(self)
    }

    pub fn states(&self) -> &ProductSpace {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.size()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states();
        let start = (s * self.n_actions + a) * n;
        &self.transition[start..start + n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn check_state(&self, s: usize) -> Result<(), EnvError> {
        if s < self.n_states() {
            Ok(())
        } else {
            Err(EnvError::OutOfRange(format!("state {s}")))
        }
    }

    pub fn check_action(&self, a: usize) -> Result<(), EnvError> {
        if a < self.n_actions {
            Ok(())
        } else {
            Err(EnvError::OutOfRange(format!("action {a}")))
        }
    }

    pub fn sample_initial(&self, rng: &mut SimRng) -> usize {
        rng::categorical(rng, &self.initial)
    }
}

/// One step from `state` under `action` with a fresh generator seeded by `seed`.
pub fn step(mdp: &Mdp, state: usize, action: usize, seed: u64) -> Result<(usize, f64), EnvError> {
    step_with(mdp, state, action, &mut rng::seeded(seed))
}

/// One step drawing from a caller-owned generator.
pub fn step_with(mdp: &Mdp, state: usize, action: usize, rng: &mut SimRng) -> Result<(usize, f64), EnvError> {
    mdp.check_state(state)?;
    mdp.check_action(action)?;
    let next = rng::categorical(rng, mdp.transition_row(state, action));
    Ok((next, mdp.reward(state, action)))
}

/// An MDP whose state is seen only through a measurement map.
#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    base: Mdp,
    observations: ProductSpace,
    /// `measurement[s * O + o]`
    measurement: Vec<f64>,
}

impl Pomdp {
    pub fn new(base: Mdp, observations: ProductSpace, measurement: Vec<f64>) -> Result<Self, EnvError> {
        let o = observations.size();
        if measurement.len() != base.n_states() * o {
            return Err(EnvError::ShapeMismatch(format!(
                "measurement has {} entries, expected {}",
                measurement.len(),
                base.n_states() * o
            )));
        }
        check_rows("measurement", &measurement, o)?;
        Ok(Pomdp { base, observations, measurement })
    }

    /// Identity measurement over the base state space.
    pub fn fully_observed(base: Mdp) -> Self {
        let n = base.n_states();
        let mut measurement = vec![0.0; n * n];
        for s in 0..n {
            measurement[s * n + s] = 1.0;
        }
        let observations = base.states().clone();
        Pomdp { base, observations, measurement }
    }

    /// Replaces the measurement map, keeping the observation space.
    pub fn with_measurement(self, measurement: Vec<f64>) -> Result<Self, EnvError> {
        Pomdp::new(self.base, self.observations, measurement)
    }

    pub fn base(&self) -> &Mdp {
        &self.base
    }

    pub fn observations(&self) -> &ProductSpace {
        &self.observations
    }

    pub fn n_observations(&self) -> usize {
        self.observations.size()
    }

    pub fn measurement_row(&self, s: usize) -> &[f64] {
        let o = self.n_observations();
        &self.measurement[s * o..(s + 1) * o]
    }

    pub fn observe(&self, s: usize, rng: &mut SimRng) -> usize {
        rng::categorical(rng, self.measurement_row(s))
    }
}

/// A normalized distribution over the states of an MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    probabilities: Vec<f64>,
}

impl BeliefState {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, EnvError> {
        if let Some(&bad) = probabilities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(EnvError::InvalidProbability(bad));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > BELIEF_TOLERANCE {
            return Err(EnvError::Unnormalized { what: "belief", row: 0, sum });
        }
        Ok(BeliefState { probabilities })
    }

    pub fn point_mass(n: usize, s: usize) -> Self {
        let mut probabilities = vec![0.0; n];
        probabilities[s] = 1.0;
        BeliefState { probabilities }
    }

    pub fn initial(mdp: &Mdp) -> Self {
        BeliefState { probabilities: mdp.initial().to_vec() }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// Exact Bayes filter: predict through the transition rows, weight by the
/// likelihood of `observation`, renormalize.
pub fn belief_update(
    pomdp: &Pomdp,
    belief: &BeliefState,
    action: usize,
    observation: usize,
) -> Result<BeliefState, EnvError> {
    let mdp = pomdp.base();
    mdp.check_action(action)?;
    if belief.probabilities.len() != mdp.n_states() {
        return Err(EnvError::ShapeMismatch(format!("belief over {} states", belief.probabilities.len())));
    }
    if observation >= pomdp.n_observations() {
        return Err(EnvError::OutOfRange(format!("observation {observation}")));
    }
    let n = mdp.n_states();
    let mut predicted = vec![0.0; n];
    for (s, &b) in belief.probabilities.iter().enumerate().filter(|(_, &b)| b > 0.0) {
        for (next, &p) in mdp.transition_row(s, action).iter().enumerate() {
            predicted[next] += b * p;
        }
    }
    for (s, p) in predicted.iter_mut().enumerate() {
        *p *= pomdp.measurement_row(s)[observation];
    }
    let total: f64 = predicted.iter().sum();
    if total <= 0.0 {
        return Err(EnvError::ZeroLikelihood(observation));
    }
    predicted.iter_mut().for_each(|p| *p /= total);
    Ok(BeliefState { probabilities: predicted })
}

/// Simulates a POMDP episode-by-episode; keeps the hidden state.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pomdp: &'a Pomdp,
    rng: SimRng,
    state: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(pomdp: &'a Pomdp, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let state = pomdp.base().sample_initial(&mut rng);
        Simulator { pomdp, rng, state }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn observation(&mut self) -> usize {
        self.pomdp.observe(self.state, &mut self.rng)
    }

    pub fn is_terminal(&self) -> bool {
        self.pomdp.base().is_terminal(self.state)
    }

    pub fn reset(&mut self) {
        self.state = self.pomdp.base().sample_initial(&mut self.rng);
    }

    /// Advances the hidden state; returns the reward.
    pub fn act(&mut self, action: usize) -> Result<f64, EnvError> {
        let (next, reward) = step_with(self.pomdp.base(), self.state, action, &mut self.rng)?;
        self.state = next;
        Ok(reward)
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }
}
