//! Reproducible experiments: a TOML config in, a [`Scorecard`] out.
//!
//! A run trains one agent per seed (seeds run in parallel), then adds the
//! representation's disentanglement scores, the bisimulation partition of
//! the task and the parent sets recovered by structure learning.

mod compare;
mod config;
mod report;

#[cfg(test)]
mod tests;

pub use compare::{compare_agents, ComparisonReport, Metric, PairComparison, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED};
pub use config::{
    AgentSection, ClipSetting, ExperimentConfig, RepresentationChoice, SourceSection, Task, TaskSection, Thresholds,
    VaeSection,
};
pub use report::{emit_report, load_scorecard, CURVES_FILE, MI_MATRIX_FILE, PARTITION_FILE, SCORECARD_FILE};

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    observation_vector, train_encoder, train_integrated, AgentError, CodeEncoder, Representation,
};
use crate::disentangle::{score_disentanglement, DisentangleError, ScoreReport};
use crate::env::{
    bisimulation_partition, exact_parents, learn_factored_dynamics, random_action_transitions, step_with, EnvError,
    Mdp, Parent, Partition, Pomdp, TransitionDataset,
};
use crate::joint::{JointError, JointTable};
use crate::planning::value_iteration_oracle;
use crate::replay::{
    ingest_natural, ingest_social, integrate, DemoStep, IntegrationConfig, IntegrationMode, ReplayBuffer, ReplayError,
    SourceTag, SourceWeights,
};
use crate::rng;
use crate::scm::VariableId;

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Invalid or inconsistent input; the message names the field.
    #[error("config error: {0}")]
    Config(String),
    #[error("scorecards are for different tasks: {0}")]
    TaskMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Disentangle(#[from] DisentangleError),
    #[error(transparent)]
    Joint(#[from] JointError),
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.into(), source }
    }

    /// Process exit code: 3 for I/O failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Io { .. } => 3,
            _ => 2,
        }
    }
}

/// One seed's training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeedRun {
    pub seed: u64,
    /// Mean episode return per evaluation block.
    pub curve: Vec<f64>,
    pub final_return: f64,
    /// Episodes until the first block whose mean reaches the threshold.
    pub episodes_to_threshold: Option<usize>,
    /// Gradient-batch draws per source (egocentric, social, natural).
    pub source_counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scorecard {
    pub task: Task,
    pub representation: RepresentationChoice,
    pub mode: IntegrationMode,
    pub episodes: usize,
    pub eval_block: usize,
    /// Optimal expected discounted return from the initial distribution.
    pub optimal_return: f64,
    pub return_threshold: f64,
    pub runs: Vec<SeedRun>,
    pub final_mean: f64,
    /// Standard error of the final return across seeds (0 for one seed).
    pub final_stderr: f64,
    /// Scores of the representation's codes against the hidden factors,
    /// with states weighted uniformly.
    pub scores: ScoreReport,
    pub n_states: usize,
    pub partition: Partition,
    pub bisimulation_blocks: usize,
    /// Blocks per state.
    pub compression_ratio: f64,
    /// Where the structure-learning data came from.
    pub model_source: SourceTag,
    pub parents: Vec<Vec<Parent>>,
    pub true_parents: Vec<Vec<Parent>>,
    /// Recovered parents equal the true ones on every checked factor. With
    /// action-free data only factors without an action parent are checked.
    pub parents_exact: bool,
    /// Summed over seeds.
    pub source_counts: [usize; 3],
    pub total_draws: usize,
}

/// Mean and standard error.
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every seed of `config` and assembles the scorecard.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Scorecard, ExperimentError> {
    config.validate()?;
    let task = config.task.resolve()?;
    let env = task.build()?;
    let mdp = env.base();
    let representation = build_representation(config, &env)?;
    let train = config.train_config();
    let oracle = value_iteration_oracle(mdp, 1e-12);
    let optimal_return = oracle.initial_value(mdp);
    let return_threshold = config.thresholds.return_threshold.unwrap_or(0.95 * optimal_return);

    let runs: Vec<SeedRun> = config
        .agent
        .seeds
        .par_iter()
        .map(|&seed| {
            let buffer = seed_buffer(config, &env, &representation, &oracle.policy, seed)?;
            let integration = IntegrationConfig {
                weights: SourceWeights::new(config.sources.egocentric, config.sources.social, 0.0),
                is_clip: config.thresholds.is_clip.cap(),
            };
            let plan = integrate(&buffer, config.agent.mode, &integration)?;
            let out = train_integrated(&env, &representation, &train, &plan, buffer, seed)?;
            let episodes_to_threshold =
                out.curve.iter().position(|&c| c >= return_threshold).map(|i| (i + 1) * config.agent.eval_block);
            Ok(SeedRun {
                seed,
                curve: out.curve,
                final_return: out.final_return,
                episodes_to_threshold,
                source_counts: out.source_counts,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let finals: Vec<f64> = runs.iter().map(|r| r.final_return).collect();
    let (final_mean, final_stderr) = mean_stderr(&finals);
    let mut source_counts = [0; 3];
    for r in &runs {
        for (total, c) in source_counts.iter_mut().zip(r.source_counts) {
            *total += c;
        }
    }

    let scores = score_disentanglement(&representation_joint(&env, &representation)?)?;
    let partition = bisimulation_partition(mdp);
    let bisimulation_blocks = partition.n_blocks();

    let (model_source, data) = model_data(config, mdp)?;
    let parents = learn_factored_dynamics(&data, config.thresholds.cmi)?.parents().to_vec();
    let true_parents = exact_parents(mdp);
    let parents_exact = parents.iter().zip(&true_parents).all(|(learned, truth)| {
        (model_source == SourceTag::Natural && truth.contains(&Parent::Action)) || learned == truth
    });

    Ok(Scorecard {
        task,
        representation: config.agent.representation,
        mode: config.agent.mode,
        episodes: config.agent.episodes,
        eval_block: config.agent.eval_block,
        optimal_return,
        return_threshold,
        runs,
        final_mean,
        final_stderr,
        scores,
        n_states: mdp.n_states(),
        compression_ratio: bisimulation_blocks as f64 / mdp.n_states() as f64,
        partition,
        bisimulation_blocks,
        model_source,
        parents,
        true_parents,
        parents_exact,
        total_draws: source_counts.iter().sum(),
        source_counts,
    })
}

fn build_representation(config: &ExperimentConfig, env: &Pomdp) -> Result<Representation, ExperimentError> {
    Ok(match config.agent.representation {
        RepresentationChoice::Raw => Representation::Raw,
        RepresentationChoice::MixedObservation => Representation::MixedObservation,
        RepresentationChoice::LearnedCodes => {
            let vae = &config.vae;
            let space = env.observations();
            let vectors: Vec<Vec<f64>> = (0..space.size()).map(|o| observation_vector(space, o, vae.scale)).collect();
            let data: Vec<Vec<f64>> = (0..vae.repeats).flat_map(|_| vectors.iter().cloned()).collect();
            let (model, _) = train_encoder(&data, &vae.vae_config())?;
            Representation::LearnedCodes(CodeEncoder::from_vae(&model, &vectors)?)
        }
    })
}

/// Seed streams: 0 and 1 belong to training, 2 to demonstrations, 3 to
/// natural data.
fn seed_buffer(
    config: &ExperimentConfig,
    env: &Pomdp,
    representation: &Representation,
    expert: &[usize],
    seed: u64,
) -> Result<ReplayBuffer, ExperimentError> {
    let mut buffer = ReplayBuffer::new(config.agent.buffer_capacity);
    let needs = config.agent.mode.required_sources();
    if needs.contains(&SourceTag::Social) {
        let demos = demonstrations(config, env, representation, expert, rng::derive_seed(seed, 2))?;
        for t in ingest_social(&demos, None, "expert")? {
            buffer.store(t)?;
        }
    }
    if needs.contains(&SourceTag::Natural) {
        let data = ghost_transitions(config, env.base(), rng::derive_seed(seed, 3))?;
        for (i, pairs) in chained_runs(&data).into_iter().enumerate() {
            buffer.store(ingest_natural(&pairs, &format!("ghost-{i}"))?)?;
        }
    }
    Ok(buffer)
}

/// Expert episodes from the optimal policy on the hidden state, recorded in
/// the agent's representation.
fn demonstrations(
    config: &ExperimentConfig,
    env: &Pomdp,
    representation: &Representation,
    expert: &[usize],
    seed: u64,
) -> Result<Vec<Vec<DemoStep>>, ExperimentError> {
    let mdp = env.base();
    let mut r = rng::seeded(seed);
    (0..config.sources.demonstrations)
        .map(|_| {
            let mut s = mdp.sample_initial(&mut r);
            let mut x = representation.index(env, s, &mut r);
            let mut steps = Vec::with_capacity(config.agent.horizon);
            for _ in 0..config.agent.horizon {
                if mdp.is_terminal(s) {
                    break;
                }
                let a = expert[s];
                let (next, reward) = step_with(mdp, s, a, &mut r)?;
                let x_next = representation.index(env, next, &mut r);
                steps.push((x, a, reward, x_next));
                s = next;
                x = x_next;
            }
            Ok(steps)
        })
        .collect()
}

/// State changes of the task driven by a hidden random script; the actions
/// are dropped.
fn ghost_transitions(config: &ExperimentConfig, mdp: &Mdp, seed: u64) -> Result<TransitionDataset, ExperimentError> {
    let data = random_action_transitions(mdp, config.sources.natural_transitions, config.agent.horizon, seed)?;
    Ok(data.without_actions())
}

/// Splits records into maximal chained runs of flat `(state, next)` pairs.
fn chained_runs(data: &TransitionDataset) -> Vec<Vec<(usize, usize)>> {
    let space = data.space();
    let mut runs: Vec<Vec<(usize, usize)>> = Vec::new();
    for rec in data.records() {
        let s = space.encode(&rec.state).expect("dataset states are in range");
        let next = space.encode(&rec.next).expect("dataset states are in range");
        match runs.last_mut() {
            Some(run) if run.last().is_some_and(|&(_, prev)| prev == s) => run.push((s, next)),
            _ => runs.push(vec![(s, next)]),
        }
    }
    runs
}

fn model_data(config: &ExperimentConfig, mdp: &Mdp) -> Result<(SourceTag, TransitionDataset), ExperimentError> {
    let seed = rng::derive_seed(config.agent.seeds[0], 4);
    if config.agent.mode.required_sources().contains(&SourceTag::Natural) {
        Ok((SourceTag::Natural, ghost_transitions(config, mdp, seed)?))
    } else {
        let n = config.sources.natural_transitions;
        Ok((SourceTag::Egocentric, random_action_transitions(mdp, n, config.agent.horizon, seed)?))
    }
}

/// Exact joint of hidden factors and representation codes, states uniform.
/// Raw codes are the state factors, observation codes the observation
/// axes, learned codes the bits of the code index.
fn representation_joint(env: &Pomdp, representation: &Representation) -> Result<JointTable, ExperimentError> {
    let states = env.base().states();
    let observations = env.observations();
    let code_axes: Vec<usize> = match representation {
        Representation::Raw => states.axes().to_vec(),
        Representation::MixedObservation => observations.axes().to_vec(),
        Representation::LearnedCodes(enc) => vec![2; enc.n_codes().trailing_zeros() as usize],
    };
    let mut axes = states.axes().to_vec();
    axes.extend(&code_axes);
    let joint_space = crate::space::ProductSpace::new(axes.clone()).map_err(EnvError::from)?;
    let mut probs = vec![0.0; joint_space.size()];
    let p_state = 1.0 / states.size() as f64;
    for (s, factors) in states.iter().enumerate() {
        let mut emit = |codes: Vec<usize>, p: f64| {
            let mut tuple = factors.clone();
            tuple.extend(codes);
            probs[joint_space.encode(&tuple).expect("codes in range")] += p;
        };
        match representation {
            Representation::Raw => emit(factors.clone(), p_state),
            Representation::MixedObservation => {
                for (o, &p) in env.measurement_row(s).iter().enumerate().filter(|(_, &p)| p > 0.0) {
                    emit(observations.decode(o), p_state * p);
                }
            }
            Representation::LearnedCodes(enc) => {
                let l = code_axes.len();
                for (o, &p) in env.measurement_row(s).iter().enumerate().filter(|(_, &p)| p > 0.0) {
                    let c = enc.code(o);
                    emit((0..l).map(|k| (c >> (l - 1 - k)) & 1).collect(), p_state * p);
                }
            }
        }
    }
    let mut vars: Vec<VariableId> = (0..states.rank()).map(VariableId::factor).collect();
    vars.extend((0..code_axes.len()).map(VariableId::code));
    Ok(JointTable::new(vars, axes, probs)?)
}
