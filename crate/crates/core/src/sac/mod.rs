//! Soft actor-critic with twin critics, Polyak targets and automatic
//! temperature.

pub mod agent;
pub mod buffer;
pub mod config;
pub mod policy;
pub mod train;

use thiserror::Error;

pub use agent::{alpha_objective, fresh_critic, Agent, QFn, UpdateStats, ACTOR_PREFIX, CRITIC_PREFIX, LOG_ALPHA};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use config::SacConfig;
pub use policy::{squash_sample, squashed_log_density, Policy};
pub use train::{evaluate_deterministic, evaluate_with, train, EpisodeRecord, TrainOptions, TrainReport};

use crate::env::EnvError;
use crate::nn::NnError;
use crate::pnn::PnnError;

#[derive(Debug, Error)]
pub enum SacError {
    #[error("invalid agent configuration `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("incompatible shapes: {0}")]
    IncompatibleShapes(String),
    #[error("observation contains non-finite values")]
    NonFiniteObservation,
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pnn(#[from] PnnError),
    #[error(transparent)]
    Env(#[from] EnvError),
}
