//! Finite structural causal models, disentanglement checks and tabular causal
//! reinforcement learning, with exact oracles for testing.
//!
//! The guide in `book/` walks through each module.

pub mod agents;
pub mod disentangle;
pub mod env;
pub mod experiment;
pub mod joint;
pub mod numfmt;
pub mod planning;
pub mod replay;
pub mod rng;
pub mod scm;
pub mod space;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/disentangle.md")]
    mod disentangle {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/replay.md")]
    mod replay {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
}
