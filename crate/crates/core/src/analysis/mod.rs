//! Post-processing: learning-curve scores, perturbation sensitivity of
//! progressive actors, scale separation and proper orthogonal decomposition.

pub mod aps;
pub mod curve;
pub mod filter;
pub mod pod;
pub mod scores;

use thiserror::Error;

use crate::pnn::PnnError;
use crate::sac::SacError;

pub use aps::{ablation_returns, aps_cell, aps_map, ApsCell, ApsConfig, ApsMap, ApsStatus};
pub use curve::{Aggregate, LearningCurve, TrialCurve, SMOOTHING_WINDOW};
pub use filter::{cutoff_wavenumber, spectral_filter};
pub use pod::{pod, PodResult};
pub use scores::{final_return_score, transfer_score, ScoreReport};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("baseline area {0} is not positive")]
    DegenerateBaseline(f64),
    #[error("curve ends at step {last} but the horizon is {horizon}")]
    InsufficientCoverage { last: f64, horizon: f64 },
    #[error("curve has no points")]
    EmptyCurve,
    #[error("trial {trial}: steps are not strictly increasing at index {index}")]
    NonIncreasingSteps { trial: usize, index: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed curve file: {0}")]
    Format(String),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Pnn(#[from] PnnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
