//! Episodic control-environment interface shared by the trainer and the
//! analysis tools.

use thiserror::Error;

use crate::spectral::SpectralError;

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Episode ended by its time limit.
    pub done: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("simulation produced a non-finite state at control step {step}")]
    NonFinite { step: usize },
    #[error("action component {index} = {value} outside [{low}, {high}]")]
    ActionOutOfRange { index: usize, value: f64, low: f64, high: f64 },
    #[error("expected an action of length {expected}, got {got}")]
    ActionDim { expected: usize, got: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A resettable environment with a box action space `[-bound, bound]^d`.
///
/// Implementations are single-threaded; independent clones may be stepped
/// concurrently.
pub trait Environment: Clone + Send {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bound(&self) -> f64;
    fn episode_length(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError>;
    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError>;
}
