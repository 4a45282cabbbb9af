//! Small dense networks with tape-based gradients, per-entry freezing,
//! Adam, and a binary checkpoint format.

pub mod adam;
pub mod ckpt;
pub mod mlp;
pub mod params;
pub mod tape;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig};
pub use ckpt::{Checkpoint, CHECKPOINT_MAGIC};
pub use mlp::{orthogonal, Activation, LayerSpec, Mlp};
pub use params::{Entry, ParamStore};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { context: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` declared twice")]
    DuplicateParam(String),
    #[error("gradient supplied for frozen parameter `{0}`")]
    FrozenGradient(String),
    #[error("loss node must be 1 x 1")]
    NonScalarLoss,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
