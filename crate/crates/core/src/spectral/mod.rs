//! Fourier pseudo-spectral Kuramoto-Sivashinsky solver and control
//! environment.

pub mod env;
pub mod field;
pub mod io;
pub mod solver;
pub mod steady;

use thiserror::Error;

pub use env::{calibrate_d0, calibrated_reference, calibration_seeds, ActuatorBank, KsEnv, SensorArray, Simulation};
pub use field::{Fourier, SpectralField};
pub use io::{RefStateRecord, Trajectory};
pub use solver::{dealias_cutoff, KsConfig, KsSolver};
pub use steady::{find_steady_states, reference_state, ReferenceName, ReferenceState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid solver configuration `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("solution became non-finite")]
    NonFinite,
    #[error("Newton iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("no equilibrium available for reference `{0}`")]
    MissingReference(ReferenceName),
    #[error("reward normalization d0 = {0:e} is too small")]
    DegenerateNormalization(f64),
}
