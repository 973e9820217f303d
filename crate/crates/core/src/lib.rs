//! Language-image value learning at desk scale.
//!
//! A deterministic toy manipulation world produces text-annotated videos;
//! vision and language encoders are trained with value-learning and
//! contrastive objectives; the learned embedding similarity then serves as a
//! goal-conditioned value, a dense reward, a policy feature and a planning
//! score.

pub mod canonical;
pub mod cli;
pub mod diffnet;
pub mod encoders;
pub mod error;
pub mod objectives;
pub mod planner;
pub mod policy;
pub mod reward;
pub mod training;
pub mod verify;
pub mod worldgen;

pub use error::{Error, Result};
