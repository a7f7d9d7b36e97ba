//! The actor-critic training loop.

use serde::{Deserialize, Serialize};

use super::tabular::{accumulate_score, tail_returns};
use super::{estimate_values, AgentError, GaussianVae, GradientVector, SoftmaxPolicy, ValueTable};
use crate::env::{step_with, Pomdp};
use crate::replay::{
    importance_weight, IntegrationPlan, ReplayBuffer, SourceTag, Trajectory, Transition, DEFAULT_CAPACITY,
    DEFAULT_IS_CLIP,
};
use crate::rng::{self, SimRng};
use crate::space::ProductSpace;

/// Maps observation indices to discrete code indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CodeEncoder {
    codes: Vec<usize>,
    n_codes: usize,
}

impl CodeEncoder {
    pub fn new(codes: Vec<usize>, n_codes: usize) -> Result<Self, AgentError> {
        if codes.iter().any(|&c| c >= n_codes) {
            return Err(AgentError::OutOfRange("code index".into()));
        }
        Ok(CodeEncoder { codes, n_codes })
    }

    /// Thresholds each posterior-mean dimension at its median over
    /// `vectors` (one per observation index); the bits form the code index.
    pub fn from_vae(vae: &GaussianVae, vectors: &[Vec<f64>]) -> Result<Self, AgentError> {
        let l = vae.latent_dim();
        if l >= usize::BITS as usize - 1 {
            return Err(AgentError::Config(format!("latent dimension {l} too large to index codes")));
        }
        let means: Vec<Vec<f64>> = vectors.iter().map(|x| vae.encode(x).map(|e| e.0)).collect::<Result<_, _>>()?;
        let thresholds: Vec<f64> = (0..l)
            .map(|k| {
                let mut col: Vec<f64> = means.iter().map(|m| m[k]).collect();
                col.sort_by(f64::total_cmp);
                let mid = col.len() / 2;
                if col.len() % 2 == 1 {
                    col[mid]
                } else {
                    0.5 * (col[mid - 1] + col[mid])
                }
            })
            .collect();
        let codes = means
            .iter()
            .map(|m| (0..l).fold(0, |acc, k| 2 * acc + usize::from(m[k] > thresholds[k])))
            .collect();
        CodeEncoder::new(codes, 1 << l)
    }

    pub fn code(&self, observation: usize) -> usize {
        self.codes[observation]
    }

    pub fn n_codes(&self) -> usize {
        self.n_codes
    }

    pub fn n_observations(&self) -> usize {
        self.codes.len()
    }
}

/// Observation `o` as concatenated per-axis one-hot blocks times `scale`.
pub fn observation_vector(space: &ProductSpace, o: usize, scale: f64) -> Vec<f64> {
    let tuple = space.decode(o);
    let mut x = vec![0.0; space.axes().iter().sum()];
    let mut offset = 0;
    for (v, &c) in tuple.iter().zip(space.axes()) {
        x[offset + v] = scale;
        offset += c;
    }
    x
}

/// What the policy conditions on.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// The hidden state index.
    Raw,
    /// The observation index.
    MixedObservation,
    /// A discrete code computed from the observation.
    LearnedCodes(CodeEncoder),
}

impl Representation {
    pub fn size(&self, env: &Pomdp) -> usize {
        match self {
            Representation::Raw => env.base().n_states(),
            Representation::MixedObservation => env.n_observations(),
            Representation::LearnedCodes(enc) => enc.n_codes(),
        }
    }

    /// Representation index of hidden state `s`; may sample an observation.
    pub fn index(&self, env: &Pomdp, s: usize, rng: &mut SimRng) -> usize {
        match self {
            Representation::Raw => s,
            Representation::MixedObservation => env.observe(s, rng),
            Representation::LearnedCodes(enc) => enc.code(env.observe(s, rng)),
        }
    }

    pub fn validate(&self, env: &Pomdp) -> Result<(), AgentError> {
        match self {
            Representation::LearnedCodes(enc) if enc.n_observations() != env.n_observations() => Err(
                AgentError::Config(format!("encoder covers {} observations, task has {}", enc.n_observations(), env.n_observations())),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Maximum steps per episode.
    pub horizon: usize,
    /// Trajectories per gradient step; one step follows every episode.
    pub batch_size: usize,
    pub step_size: f64,
    pub eval_block: usize,
    pub buffer_capacity: usize,
    pub is_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 5000,
            horizon: 20,
            batch_size: 8,
            step_size: 0.05,
            eval_block: 100,
            buffer_capacity: DEFAULT_CAPACITY,
            is_clip: Some(DEFAULT_IS_CLIP),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batchSize must be positive".into());
        }
        if self.eval_block == 0 {
            return bad("evalBlock must be positive".into());
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad(format!("stepSize {}", self.step_size));
        }
        if let Some(c) = self.is_clip {
            if !(c.is_finite() && c >= 1.0) {
                return bad(format!("isClip {c} must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainOutcome {
    pub policy: SoftmaxPolicy,
    /// Discounted return of every training episode.
    pub episode_returns: Vec<f64>,
    /// Mean episode return per evaluation block.
    pub curve: Vec<f64>,
    /// Mean return of the last block.
    pub final_return: f64,
    /// Gradient-batch draws per source, in egocentric, social, natural order.
    pub source_counts: [usize; 3],
    /// First-visit values from the gradient-weighted sources at the end.
    pub values: Option<ValueTable>,
}

/// Actor-critic on the learner's own experience only.
pub fn train_actor_critic(
    env: &Pomdp,
    representation: &Representation,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, AgentError> {
    let plan = IntegrationPlan::ego_only(config.is_clip);
    train_integrated(env, representation, config, &plan, ReplayBuffer::new(config.buffer_capacity), seed)
}

/// Runs `config.episodes` episodes. After each one the episode is stored as
/// egocentric data and, if the plan allows, one gradient step is taken on a
/// batch drawn from `buffer` under the plan's weights.
///
/// The baseline for each batch trajectory is the first-visit Monte-Carlo
/// value estimated from the other trajectories in the batch.
pub fn train_integrated(
    env: &Pomdp,
    representation: &Representation,
    config: &TrainConfig,
    plan: &IntegrationPlan,
    mut buffer: ReplayBuffer,
    seed: u64,
) -> Result<TrainOutcome, AgentError> {
    config.validate()?;
    representation.validate(env)?;
    let mdp = env.base();
    let n_rep = representation.size(env);
    let discount = mdp.discount();
    let mut policy = SoftmaxPolicy::uniform(n_rep, mdp.n_actions());
    let mut env_rng = rng::seeded(rng::derive_seed(seed, 0));
    let mut batch_rng = rng::seeded(rng::derive_seed(seed, 1));
    let mut episode_returns = Vec::with_capacity(config.episodes);
    let mut source_counts = [0usize; 3];

    for episode in 0..config.episodes {
        let mut s = mdp.sample_initial(&mut env_rng);
        let mut x = representation.index(env, s, &mut env_rng);
        let mut transitions = Vec::with_capacity(config.horizon);
        for _ in 0..config.horizon {
            if mdp.is_terminal(s) {
                break;
            }
            let (a, p) = policy.sample(x, &mut env_rng);
            let (next, r) = step_with(mdp, s, a, &mut env_rng)?;
            let x_next = representation.index(env, next, &mut env_rng);
            transitions.push(Transition::acted(x, a, r, x_next, Some(p)));
            s = next;
            x = x_next;
        }
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward.unwrap_or(0.0)).collect();
        episode_returns.push(tail_returns(&rewards, discount).first().copied().unwrap_or(0.0));
        buffer.store(Trajectory::new(transitions, SourceTag::Egocentric, format!("ego-{episode}"))?)?;

        if plan.policy_updates {
            let batch = buffer.sample_batch_with(&plan.batch_weights, config.batch_size, &mut batch_rng)?;
            for t in &batch {
                source_counts[t.source().index()] += 1;
            }
            let grad = batch_gradient(&batch, &policy, plan, discount)?;
            policy.ascend(&grad, config.step_size)?;
        }
    }

    let values = {
        let sources: Vec<Trajectory> = SourceTag::ALL
            .into_iter()
            .filter(|&t| t != SourceTag::Natural && plan.batch_weights.get(t) > 0.0)
            .flat_map(|t| buffer.trajectories(t).cloned())
            .collect();
        if sources.is_empty() {
            None
        } else {
            Some(estimate_values(&sources, discount, n_rep, mdp.n_actions())?.0)
        }
    };
    let curve: Vec<f64> = episode_returns
        .chunks_exact(config.eval_block)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let final_return = match curve.last() {
        Some(&v) => v,
        None => episode_returns.iter().sum::<f64>() / episode_returns.len() as f64,
    };
    Ok(TrainOutcome { policy, episode_returns, curve, final_return, source_counts, values })
}

/// Importance-weighted, leave-one-out-baselined gradient of a batch.
fn batch_gradient(
    batch: &[&Trajectory],
    policy: &SoftmaxPolicy,
    plan: &IntegrationPlan,
    discount: f64,
) -> Result<GradientVector, AgentError> {
    let n = policy.n_states();
    let first_visits: Vec<Vec<(usize, f64)>> = batch
        .iter()
        .map(|t| {
            let returns = tail_returns(&t.rewards()?, discount);
            let mut seen = vec![false; n];
            let mut out = Vec::new();
            for (tr, g) in t.transitions().iter().zip(returns) {
                if !seen[tr.state] {
                    seen[tr.state] = true;
                    out.push((tr.state, g));
                }
            }
            Ok(out)
        })
        .collect::<Result<_, AgentError>>()?;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for &(s, g) in first_visits.iter().flatten() {
        sum[s] += g;
        count[s] += 1;
    }

    let mut grad = vec![0.0; n * policy.n_actions()];
    let mut baseline = ValueTable::zeros(n);
    for (traj, own) in batch.iter().zip(&first_visits) {
        for &(s, g) in own {
            let others = count[s] - 1;
            baseline.values[s] = if others > 0 { (sum[s] - g) / others as f64 } else { 0.0 };
        }
        let w = if plan.importance_sampling { plan.clip(importance_weight(traj, policy)?) } else { 1.0 };
        accumulate_score(&mut grad, traj, policy, &baseline, discount, w)?;
    }
    let mut g = GradientVector(grad);
    g.scale(1.0 / batch.len() as f64);
    Ok(g)
}
