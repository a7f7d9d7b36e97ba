//! Source-tagged experience and the rules for combining sources.
//!
//! Natural-tagged data carries no actions, rewards or behavior
//! probabilities. It may feed model learning but never a policy gradient;
//! every gradient entry point rejects it with
//! [`ReplayError::NaturalSourceRejected`].

mod buffer;
mod integrate;

pub use buffer::{ReplayBuffer, SourceWeights, DEFAULT_CAPACITY};
pub use integrate::{integrate, IntegrationConfig, IntegrationMode, IntegrationPlan, DEFAULT_IS_CLIP};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::SoftmaxPolicy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("transition {at} does not start where transition {} ended", at - 1)]
    BrokenChain { at: usize },
    #[error("invalid transition at step {at}: {reason}")]
    InvalidTransition { at: usize, reason: String },
    #[error("no weighted source has data")]
    EmptySources,
    #[error("invalid source weights: {0}")]
    InvalidWeights(String),
    #[error("step {0} has no behavior probability")]
    MissingBehaviorProb(usize),
    #[error("natural-source data cannot be used for policy gradients")]
    NaturalSourceRejected,
    #[error("integration mode needs {0} data")]
    MissingSource(SourceTag),
    #[error("state or action out of range: {0}")]
    OutOfRange(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Where a trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    /// The learner's own behavior.
    Egocentric,
    /// Demonstrations by another agent.
    Social,
    /// Agent-free state changes; action and reward are unobserved.
    Natural,
}

impl SourceTag {
    pub const ALL: [SourceTag; 3] = [SourceTag::Egocentric, SourceTag::Social, SourceTag::Natural];

    pub fn index(self) -> usize {
        match self {
            SourceTag::Egocentric => 0,
            SourceTag::Social => 1,
            SourceTag::Natural => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Egocentric => "egocentric",
            SourceTag::Social => "social",
            SourceTag::Natural => "natural",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SourceTag::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown source {s:?}"))
    }
}

/// One step. States are representation indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transition {
    pub state: usize,
    pub action: Option<usize>,
    pub reward: Option<f64>,
    pub next_state: usize,
    pub behavior_prob: Option<f64>,
}

impl Transition {
    pub fn acted(state: usize, action: usize, reward: f64, next_state: usize, behavior_prob: Option<f64>) -> Self {
        Transition { state, action: Some(action), reward: Some(reward), next_state, behavior_prob }
    }

    pub fn natural(state: usize, next_state: usize) -> Self {
        Transition { state, action: None, reward: None, next_state, behavior_prob: None }
    }
}

/// A chained sequence of transitions from a single source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trajectory {
    transitions: Vec<Transition>,
    source: SourceTag,
    policy_id: String,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>, source: SourceTag, policy_id: impl Into<String>) -> Result<Self, ReplayError> {
        let t = Trajectory { transitions, source, policy_id: policy_id.into() };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), ReplayError> {
        if self.policy_id.contains(['\t', '\n', '\r']) {
            return Err(ReplayError::InvalidTransition { at: 0, reason: "policy id contains a tab or newline".into() });
        }
        for (at, w) in self.transitions.windows(2).enumerate() {
            if w[0].next_state != w[1].state {
                return Err(ReplayError::BrokenChain { at: at + 1 });
            }
        }
        let invalid = |at: usize, reason: &str| ReplayError::InvalidTransition { at, reason: reason.into() };
        for (at, tr) in self.transitions.iter().enumerate() {
            if self.source == SourceTag::Natural {
                if tr.action.is_some() || tr.reward.is_some() || tr.behavior_prob.is_some() {
                    return Err(invalid(at, "natural transitions carry no action, reward or behavior probability"));
                }
                continue;
            }
            if tr.action.is_none() || tr.reward.is_none() {
                return Err(invalid(at, "acted transitions need an action and a reward"));
            }
            if tr.reward.is_some_and(|r| !r.is_finite()) {
                return Err(invalid(at, "non-finite reward"));
            }
            if let Some(p) = tr.behavior_prob {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(invalid(at, "behavior probability outside (0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    pub fn policy_id(&self) -> &str {
        &self.policy_id
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Rewards in order; natural trajectories are rejected.
    pub fn rewards(&self) -> Result<Vec<f64>, ReplayError> {
        self.require_acted()?;
        Ok(self.transitions.iter().map(|t| t.reward.expect("validated")).collect())
    }

    /// Fails for natural trajectories, which may never drive a gradient.
    pub fn require_acted(&self) -> Result<(), ReplayError> {
        if self.source == SourceTag::Natural {
            Err(ReplayError::NaturalSourceRejected)
        } else {
            Ok(())
        }
    }
}

/// `Π_t π(a_t | s_t) / behaviorProb_t` over the whole trajectory.
pub fn importance_weight(trajectory: &Trajectory, policy: &SoftmaxPolicy) -> Result<f64, ReplayError> {
    trajectory.require_acted()?;
    let mut w = 1.0;
    for (t, tr) in trajectory.transitions.iter().enumerate() {
        let b = tr.behavior_prob.ok_or(ReplayError::MissingBehaviorProb(t))?;
        let a = tr.action.expect("validated");
        if tr.state >= policy.n_states() || a >= policy.n_actions() {
            return Err(ReplayError::OutOfRange(format!("state {} action {a}", tr.state)));
        }
        w *= policy.prob(tr.state, a) / b;
    }
    Ok(w)
}

/// One demonstrated step: `(state, action, reward, next state)`.
pub type DemoStep = (usize, usize, f64, usize);

/// Tags demonstrations as social. With `expert_probs` (one probability per
/// step) those are stored; otherwise each step's behavior probability is the
/// empirical frequency of its action among all demonstrated steps from the
/// same state.
pub fn ingest_social(
    demonstrations: &[Vec<DemoStep>],
    expert_probs: Option<&[Vec<f64>]>,
    policy_id: &str,
) -> Result<Vec<Trajectory>, ReplayError> {
    if let Some(probs) = expert_probs {
        if probs.len() != demonstrations.len() || probs.iter().zip(demonstrations).any(|(p, d)| p.len() != d.len()) {
            return Err(ReplayError::InvalidTransition { at: 0, reason: "expert probabilities do not match".into() });
        }
    }
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut totals: HashMap<usize, usize> = HashMap::new();
    for &(s, a, _, _) in demonstrations.iter().flatten() {
        *counts.entry((s, a)).or_default() += 1;
        *totals.entry(s).or_default() += 1;
    }
    demonstrations
        .iter()
        .enumerate()
        .map(|(i, demo)| {
            let transitions = demo
                .iter()
                .enumerate()
                .map(|(t, &(s, a, r, next))| {
                    let p = match expert_probs {
                        Some(probs) => probs[i][t],
                        None => counts[&(s, a)] as f64 / totals[&s] as f64,
                    };
                    Transition::acted(s, a, r, next, Some(p))
                })
                .collect();
            Trajectory::new(transitions, SourceTag::Social, policy_id)
        })
        .collect()
}

/// Tags observed `(state, next state)` pairs as natural, action-free data.
pub fn ingest_natural(observed: &[(usize, usize)], policy_id: &str) -> Result<Trajectory, ReplayError> {
    let transitions = observed.iter().map(|&(s, next)| Transition::natural(s, next)).collect();
    Trajectory::new(transitions, SourceTag::Natural, policy_id)
}
