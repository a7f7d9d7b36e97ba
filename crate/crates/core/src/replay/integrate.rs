use serde::{Deserialize, Serialize};

use super::{ReplayBuffer, ReplayError, SourceTag, SourceWeights};

/// Default cap on importance weights during training.
pub const DEFAULT_IS_CLIP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum IntegrationMode {
    EgoOnly,
    EgoSocial,
    EgoNatural,
    SocialNatural,
    Complete,
}

impl IntegrationMode {
    /// Sources that must already hold data before training starts.
    /// Egocentric data is produced by training itself.
    pub fn required_sources(self) -> &'static [SourceTag] {
        match self {
            IntegrationMode::EgoOnly => &[],
            IntegrationMode::EgoSocial => &[SourceTag::Social],
            IntegrationMode::EgoNatural => &[SourceTag::Natural],
            IntegrationMode::SocialNatural | IntegrationMode::Complete => &[SourceTag::Social, SourceTag::Natural],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntegrationConfig {
    /// Egocentric and social entries weight gradient batches; the natural
    /// entry is ignored because natural data never reaches a gradient.
    pub weights: SourceWeights,
    /// Importance weights are clamped into `[1/clip, clip]`; `None` disables.
    pub is_clip: Option<f64>,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig { weights: SourceWeights::new(1.0, 1.0, 0.0), is_clip: Some(DEFAULT_IS_CLIP) }
    }
}

/// How a training run draws on each source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntegrationPlan {
    pub mode: IntegrationMode,
    /// Sampling weights for gradient batches. The natural weight is always 0.
    pub batch_weights: SourceWeights,
    /// Importance-correct every batch trajectory against the current policy.
    pub importance_sampling: bool,
    pub is_clip: Option<f64>,
    /// False when the run only estimates values and models.
    pub policy_updates: bool,
    /// Sources used to learn factored dynamics before training.
    pub model_sources: Vec<SourceTag>,
}

impl IntegrationPlan {
    pub fn ego_only(is_clip: Option<f64>) -> Self {
        IntegrationPlan {
            mode: IntegrationMode::EgoOnly,
            batch_weights: SourceWeights::new(1.0, 0.0, 0.0),
            importance_sampling: true,
            is_clip,
            policy_updates: true,
            model_sources: Vec::new(),
        }
    }

    /// Clamps a raw importance weight according to the plan.
    pub fn clip(&self, w: f64) -> f64 {
        match self.is_clip {
            Some(c) => w.clamp(1.0 / c, c),
            None => w,
        }
    }
}

/// Builds the sampling and weighting plan for `mode`.
pub fn integrate(
    buffer: &ReplayBuffer,
    mode: IntegrationMode,
    config: &IntegrationConfig,
) -> Result<IntegrationPlan, ReplayError> {
    config.weights.validate()?;
    if let Some(c) = config.is_clip {
        if !(c.is_finite() && c >= 1.0) {
            return Err(ReplayError::InvalidWeights(format!("importance clip {c} must be at least 1")));
        }
    }
    if let Some(&missing) = mode.required_sources().iter().find(|&&t| buffer.len(t) == 0) {
        return Err(ReplayError::MissingSource(missing));
    }
    let ego = config.weights.egocentric;
    let social = config.weights.social;
    let mut plan = IntegrationPlan::ego_only(config.is_clip);
    plan.mode = mode;
    match mode {
        IntegrationMode::EgoOnly => {}
        IntegrationMode::EgoSocial => plan.batch_weights = SourceWeights::new(ego, social, 0.0),
        IntegrationMode::EgoNatural => plan.model_sources = vec![SourceTag::Natural],
        IntegrationMode::SocialNatural => {
            plan.batch_weights = SourceWeights::new(0.0, 1.0, 0.0);
            plan.policy_updates = false;
            plan.model_sources = vec![SourceTag::Natural];
        }
        IntegrationMode::Complete => {
            plan.batch_weights = SourceWeights::new(ego, social, 0.0);
            plan.model_sources = vec![SourceTag::Natural];
        }
    }
    Ok(plan)
}
