//! Tabular actor-critic learners and a linear Gaussian β-VAE encoder.

mod tabular;
mod train;
mod vae;

#[cfg(test)]
mod tests;

pub use tabular::{
    discounted_return, estimate_values, off_policy_gradient, off_policy_gradient_clipped, policy_gradient, rollout,
    GradientVector, QTable, SoftmaxPolicy, ValueTable,
};
pub use train::{
    observation_vector, train_actor_critic, train_integrated, CodeEncoder, Representation, TrainConfig, TrainOutcome,
};
pub use vae::{batch_elbo, elbo, elbo_terms, train_encoder, vae_gradient, GaussianVae, VaeConfig};

use thiserror::Error;

use crate::env::EnvError;
use crate::replay::ReplayError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} out of range")]
    OutOfRange(String),
    #[error("no trajectories")]
    Empty,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Env(#[from] EnvError),
}
