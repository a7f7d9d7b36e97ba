use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::replay::{importance_weight, Trajectory};
use crate::rng::{self, SimRng};

/// Flat parameter or gradient vector in a declared order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(n: usize) -> Self {
        GradientVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &GradientVector, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|x| *x *= factor);
    }
}

/// Softmax over a logit table. Parameters are ordered row-major by
/// (representation index, action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    /// Uniform policy (all logits zero).
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        SoftmaxPolicy { n_states, n_actions, logits: vec![0.0; n_states * n_actions] }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self, AgentError> {
        if n_actions == 0 || logits.len() != n_states * n_actions {
            return Err(AgentError::ShapeMismatch(format!(
                "{} logits for {n_states} states x {n_actions} actions",
                logits.len()
            )));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(AgentError::OutOfRange("non-finite logit".into()));
        }
        Ok(SoftmaxPolicy { n_states, n_actions, logits })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probabilities(&self, s: usize) -> Vec<f64> {
        let row = &self.logits[s * self.n_actions..(s + 1) * self.n_actions];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probabilities(s)[a]
    }

    /// Draws an action; returns it with its probability.
    pub fn sample(&self, s: usize, rng: &mut SimRng) -> (usize, f64) {
        let probs = self.probabilities(s);
        let a = rng::categorical(rng, &probs);
        (a, probs[a])
    }

    /// Gradient ascent: `logits += step * gradient`.
    pub fn ascend(&mut self, gradient: &GradientVector, step: f64) -> Result<(), AgentError> {
        if gradient.len() != self.logits.len() {
            return Err(AgentError::ShapeMismatch(format!("gradient of length {}", gradient.len())));
        }
        for (l, g) in self.logits.iter_mut().zip(gradient.as_slice()) {
            *l += step * g;
        }
        Ok(())
    }

    /// Adds `coef * ∇ log π(a|s)` into `grad`.
    pub fn add_score(&self, grad: &mut [f64], s: usize, a: usize, coef: f64) {
        let probs = self.probabilities(s);
        let row = &mut grad[s * self.n_actions..(s + 1) * self.n_actions];
        for (b, (g, p)) in row.iter_mut().zip(probs).enumerate() {
            *g += coef * (f64::from(u8::from(b == a)) - p);
        }
    }
}

/// State values with a flag for states no trajectory visited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub visited: Vec<bool>,
}

impl ValueTable {
    pub fn zeros(n_states: usize) -> Self {
        ValueTable { values: vec![0.0; n_states], visited: vec![false; n_states] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        let visited = vec![true; values.len()];
        ValueTable { values, visited }
    }

    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }
}

/// State-action values, `values[s * A + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QTable {
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub visited: Vec<bool>,
}

impl QTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }
}

/// `Σ_{i ≥ from} γ^{i - from} r_i`.
pub fn discounted_return(rewards: &[f64], discount: f64, from_step: usize) -> Result<f64, AgentError> {
    if from_step >= rewards.len() {
        return Err(AgentError::OutOfRange(format!("step {from_step} of {}", rewards.len())));
    }
    Ok(rewards[from_step..].iter().rev().fold(0.0, |acc, r| r + discount * acc))
}

/// Tail returns `G_t` for every step.
pub(crate) fn tail_returns(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        out[t] = acc;
    }
    out
}

/// First-visit Monte-Carlo averages of tail returns.
pub fn estimate_values(
    trajectories: &[Trajectory],
    discount: f64,
    n_states: usize,
    n_actions: usize,
) -> Result<(ValueTable, QTable), AgentError> {
    if trajectories.is_empty() {
        return Err(AgentError::Empty);
    }
    let mut v_sum = vec![0.0; n_states];
    let mut v_count = vec![0usize; n_states];
    let mut q_sum = vec![0.0; n_states * n_actions];
    let mut q_count = vec![0usize; n_states * n_actions];
    for traj in trajectories {
        let returns = tail_returns(&traj.rewards()?, discount);
        let mut seen_s = vec![false; n_states];
        let mut seen_sa = vec![false; n_states * n_actions];
        for (tr, g) in traj.transitions().iter().zip(returns) {
            let a = tr.action.expect("acted");
            if tr.state >= n_states || a >= n_actions {
                return Err(AgentError::OutOfRange(format!("state {} action {a}", tr.state)));
            }
            if !seen_s[tr.state] {
                seen_s[tr.state] = true;
                v_sum[tr.state] += g;
                v_count[tr.state] += 1;
            }
            let sa = tr.state * n_actions + a;
            if !seen_sa[sa] {
                seen_sa[sa] = true;
                q_sum[sa] += g;
                q_count[sa] += 1;
            }
        }
    }
    let mean = |sum: &[f64], count: &[usize]| -> Vec<f64> {
        sum.iter().zip(count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
    };
    let v = ValueTable { values: mean(&v_sum, &v_count), visited: v_count.iter().map(|&c| c > 0).collect() };
    let q = QTable {
        n_actions,
        values: mean(&q_sum, &q_count),
        visited: q_count.iter().map(|&c| c > 0).collect(),
    };
    Ok((v, q))
}

/// Adds `weight * Σ_t γ^t ∇ log π(a_t|s_t) (G_t − V(s_t))` into `grad`.
pub(crate) fn accumulate_score(
    grad: &mut [f64],
    trajectory: &Trajectory,
    policy: &SoftmaxPolicy,
    baseline: &ValueTable,
    discount: f64,
    weight: f64,
) -> Result<(), AgentError> {
    let returns = tail_returns(&trajectory.rewards()?, discount);
    let mut gamma_t = 1.0;
    for (tr, g) in trajectory.transitions().iter().zip(returns) {
        let a = tr.action.expect("acted");
        if tr.state >= policy.n_states() || a >= policy.n_actions() || tr.state >= baseline.values.len() {
            return Err(AgentError::OutOfRange(format!("state {} action {a}", tr.state)));
        }
        policy.add_score(grad, tr.state, a, weight * gamma_t * (g - baseline.get(tr.state)));
        gamma_t *= discount;
    }
    Ok(())
}

/// Monte-Carlo policy gradient averaged over trajectories.
///
/// Each step contributes `γ^t ∇ log π(a_t|s_t) (G_t − V(s_t))`; the `γ^t`
/// factor makes the estimate unbiased for the discounted objective.
pub fn policy_gradient(
    trajectories: &[Trajectory],
    policy: &SoftmaxPolicy,
    baseline: &ValueTable,
    discount: f64,
) -> Result<GradientVector, AgentError> {
    let mut grad = vec![0.0; policy.logits.len()];
    for traj in trajectories {
        accumulate_score(&mut grad, traj, policy, baseline, discount, 1.0)?;
    }
    let mut g = GradientVector(grad);
    if !trajectories.is_empty() {
        g.scale(1.0 / trajectories.len() as f64);
    }
    Ok(g)
}

/// [`policy_gradient`] with each trajectory scaled by its importance weight.
pub fn off_policy_gradient(
    batch: &[Trajectory],
    policy: &SoftmaxPolicy,
    baseline: &ValueTable,
    discount: f64,
) -> Result<GradientVector, AgentError> {
    off_policy_gradient_clipped(batch, policy, baseline, discount, None)
}

/// As [`off_policy_gradient`], clamping weights into `[1/clip, clip]`.
pub fn off_policy_gradient_clipped(
    batch: &[Trajectory],
    policy: &SoftmaxPolicy,
    baseline: &ValueTable,
    discount: f64,
    clip: Option<f64>,
) -> Result<GradientVector, AgentError> {
    let mut grad = vec![0.0; policy.logits.len()];
    for traj in batch {
        let mut w = importance_weight(traj, policy)?;
        if let Some(c) = clip {
            w = w.clamp(1.0 / c, c);
        }
        accumulate_score(&mut grad, traj, policy, baseline, discount, w)?;
    }
    let mut g = GradientVector(grad);
    if !batch.is_empty() {
        g.scale(1.0 / batch.len() as f64);
    }
    Ok(g)
}

/// One episode on the raw state space: at most `horizon` steps, stopping at
/// a terminal state. Steps record the policy's action probabilities.
pub fn rollout(
    mdp: &crate::env::Mdp,
    policy: &SoftmaxPolicy,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Trajectory, AgentError> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(AgentError::ShapeMismatch("policy does not match the MDP".into()));
    }
    let mut s = mdp.sample_initial(rng);
    let mut transitions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        if mdp.is_terminal(s) {
            break;
        }
        let (a, p) = policy.sample(s, rng);
        let (next, r) = crate::env::step_with(mdp, s, a, rng)?;
        transitions.push(crate::replay::Transition::acted(s, a, r, next, Some(p)));
        s = next;
    }
    Ok(Trajectory::new(transitions, crate::replay::SourceTag::Egocentric, "rollout")?)
}
