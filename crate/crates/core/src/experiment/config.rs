use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::agents::{TrainConfig, VaeConfig};
use crate::env::{build_dispenser_task, build_trap_tube_task, Pomdp, DEFAULT_CMI_THRESHOLD};
use crate::replay::{IntegrationMode, DEFAULT_IS_CLIP};

/// A parsed experiment file. Every section except `[task]` and `[agent]`
/// is optional, and so is every field that has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSection,
    pub agent: AgentSection,
    #[serde(default)]
    pub sources: SourceSection,
    #[serde(default)]
    pub vae: VaeSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// `[task]` as written. Parameters are checked against the task name by
/// [`TaskSection::resolve`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TaskSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_effective: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confound: Option<bool>,
}

/// A task with all parameters filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "camelCase", rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum Task {
    TrapTube { length: usize, trap_effective: bool },
    Dispenser { flip_prob: f64, confound: bool },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::TrapTube { .. } => "trapTube",
            Task::Dispenser { .. } => "dispenser",
        }
    }

    pub fn build(&self) -> Result<Pomdp, ExperimentError> {
        let env = match *self {
            Task::TrapTube { length, trap_effective } => {
                build_trap_tube_task(length, trap_effective).map(Pomdp::fully_observed)
            }
            Task::Dispenser { flip_prob, confound } => build_dispenser_task(flip_prob, confound),
        };
        env.map_err(|e| ExperimentError::Config(format!("task: {e}")))
    }
}

impl TaskSection {
    pub fn resolve(&self) -> Result<Task, ExperimentError> {
        let stray = |field: &str| {
            Err(ExperimentError::Config(format!("task.{field} does not apply to task {:?}", self.name)))
        };
        match self.name.as_str() {
            "trapTube" => {
                if self.flip_prob.is_some() {
                    return stray("flipProb");
                }
                if self.confound.is_some() {
                    return stray("confound");
                }
                let length = self.length.unwrap_or(5);
                Ok(Task::TrapTube { length, trap_effective: self.trap_effective.unwrap_or(true) })
            }
            "dispenser" => {
                if self.length.is_some() {
                    return stray("length");
                }
                if self.trap_effective.is_some() {
                    return stray("trapEffective");
                }
                let flip_prob = self.flip_prob.unwrap_or(0.2);
                if !(0.0..=1.0).contains(&flip_prob) {
                    return Err(ExperimentError::Config(format!("task.flipProb must lie in [0, 1], got {flip_prob}")));
                }
                Ok(Task::Dispenser { flip_prob, confound: self.confound.unwrap_or(false) })
            }
            other => Err(ExperimentError::Config(format!(
                "task.name: unknown task {other:?} (expected \"trapTube\" or \"dispenser\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RepresentationChoice {
    Raw,
    MixedObservation,
    LearnedCodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "default_representation")]
    pub representation: RepresentationChoice,
    #[serde(default = "default_mode")]
    pub mode: IntegrationMode,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    #[serde(default = "default_eval_block")]
    pub eval_block: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
}

fn default_representation() -> RepresentationChoice {
    RepresentationChoice::Raw
}
fn default_mode() -> IntegrationMode {
    IntegrationMode::EgoOnly
}
fn default_eval_block() -> usize {
    100
}
fn default_horizon() -> usize {
    20
}
fn default_batch_size() -> usize {
    8
}
fn default_step_size() -> f64 {
    0.05
}
fn default_capacity() -> usize {
    1000
}

/// Batch weights of the acted sources and the amount of outside data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct SourceSection {
    pub egocentric: f64,
    pub social: f64,
    /// Expert episodes per seed when the mode uses social data.
    pub demonstrations: usize,
    /// Transitions for structure learning, and per seed for the natural
    /// source when the mode uses it.
    pub natural_transitions: usize,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection { egocentric: 1.0, social: 1.0, demonstrations: 20, natural_transitions: 50_000 }
    }
}

/// Encoder settings for `learnedCodes`. The encoder sees every observation
/// vector, scaled by `scale`, `repeats` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct VaeSection {
    pub latent_dim: usize,
    pub beta: f64,
    pub steps: usize,
    pub step_size: f64,
    pub n_samples: usize,
    pub repeats: usize,
    pub scale: f64,
    pub seed: u64,
}

impl Default for VaeSection {
    fn default() -> Self {
        VaeSection {
            latent_dim: 4,
            beta: 4.0,
            steps: 3000,
            step_size: 0.002,
            n_samples: 1,
            repeats: 16,
            scale: 4.0,
            seed: 0,
        }
    }
}

impl VaeSection {
    pub fn vae_config(&self) -> VaeConfig {
        VaeConfig {
            latent_dim: self.latent_dim,
            beta: self.beta,
            steps: self.steps,
            step_size: self.step_size,
            n_samples: self.n_samples,
            seed: self.seed,
            ..VaeConfig::default()
        }
    }
}

/// An importance-weight cap, or `"off"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClipRepr", into = "ClipRepr")]
pub enum ClipSetting {
    Cap(f64),
    Off,
}

impl ClipSetting {
    pub fn cap(self) -> Option<f64> {
        match self {
            ClipSetting::Cap(c) => Some(c),
            ClipSetting::Off => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ClipRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<ClipRepr> for ClipSetting {
    type Error = String;

    fn try_from(r: ClipRepr) -> Result<Self, String> {
        match r {
            ClipRepr::Number(c) => Ok(ClipSetting::Cap(c)),
            ClipRepr::Word(w) if w == "off" => Ok(ClipSetting::Off),
            ClipRepr::Word(w) => Err(format!("expected a number or \"off\", got {w:?}")),
        }
    }
}

impl From<ClipSetting> for ClipRepr {
    fn from(c: ClipSetting) -> Self {
        match c {
            ClipSetting::Cap(c) => ClipRepr::Number(c),
            ClipSetting::Off => ClipRepr::Word("off".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Thresholds {
    /// Conditional mutual information cutoff for structure learning.
    pub cmi: f64,
    pub is_clip: ClipSetting,
    /// Learning-curve level for `episodesToThreshold`; defaults to 95% of
    /// the optimal return.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_threshold: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { cmi: DEFAULT_CMI_THRESHOLD, is_clip: ClipSetting::Cap(DEFAULT_IS_CLIP), return_threshold: None }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Field-level checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        self.task.resolve()?;
        let a = &self.agent;
        if a.seeds.is_empty() {
            return bad("agent.seeds must not be empty".into());
        }
        if a.episodes == 0 {
            return bad("agent.episodes must be positive".into());
        }
        if a.eval_block == 0 || a.episodes % a.eval_block != 0 {
            return bad(format!("agent.evalBlock {} must divide agent.episodes {}", a.eval_block, a.episodes));
        }
        if a.horizon == 0 {
            return bad("agent.horizon must be positive".into());
        }
        if a.batch_size == 0 {
            return bad("agent.batchSize must be positive".into());
        }
        if !(a.step_size.is_finite() && a.step_size > 0.0) {
            return bad(format!("agent.stepSize must be positive, got {}", a.step_size));
        }
        let s = &self.sources;
        for (field, w) in [("egocentric", s.egocentric), ("social", s.social)] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("sources.{field} must be a non-negative weight, got {w}"));
            }
        }
        if s.natural_transitions == 0 {
            return bad("sources.naturalTransitions must be positive".into());
        }
        let needs_social = a.mode.required_sources().contains(&crate::replay::SourceTag::Social);
        if needs_social && s.demonstrations == 0 {
            return bad(format!("sources.demonstrations must be positive for mode {:?}", a.mode));
        }
        if self.agent.representation == RepresentationChoice::LearnedCodes {
            let v = &self.vae;
            if v.latent_dim == 0 || v.latent_dim > 16 {
                return bad(format!("vae.latentDim must lie in 1..=16, got {}", v.latent_dim));
            }
            if !(v.beta.is_finite() && v.beta > 0.0) {
                return bad(format!("vae.beta must be positive, got {}", v.beta));
            }
            if !(v.step_size.is_finite() && v.step_size > 0.0) {
                return bad(format!("vae.stepSize must be positive, got {}", v.step_size));
            }
            if v.repeats == 0 || v.n_samples == 0 {
                return bad("vae.repeats and vae.nSamples must be positive".into());
            }
        }
        let t = &self.thresholds;
        if !(t.cmi.is_finite() && t.cmi >= 0.0) {
            return bad(format!("thresholds.cmi must be non-negative, got {}", t.cmi));
        }
        if let ClipSetting::Cap(c) = t.is_clip {
            if !(c.is_finite() && c >= 1.0) {
                return bad(format!("thresholds.isClip must be at least 1 or \"off\", got {c}"));
            }
        }
        if t.return_threshold.is_some_and(|r| !r.is_finite()) {
            return bad("thresholds.returnThreshold must be finite".into());
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            episodes: self.agent.episodes,
            horizon: self.agent.horizon,
            batch_size: self.agent.batch_size,
            step_size: self.agent.step_size,
            eval_block: self.agent.eval_block,
            buffer_capacity: self.agent.buffer_capacity,
            is_clip: self.thresholds.is_clip.cap(),
        }
    }
}
