//! Experiment orchestration behind the command-line tool: declarative
//! configs, seeded multi-trial runs, run directories and artifact files.

mod cache;
mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::env::EnvError;
use crate::sac::SacError;
use crate::spectral::SpectralError;
use crate::transfer::TransferError;

pub use cache::{cached_reference, reference_cache_path};
pub use commands::*;
pub use config::{
    AnalysisBlock, EnvBlock, ExperimentConfig, Overrides, RunBlock, ScoresBlock, SimulateBlock, TransferBlock,
    PRETRAIN_SWEEP,
};
pub use manifest::{content_hash, write_atomic, RunManifest, TrialState, TrialStatus};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {}: {reason}", path.display())]
    MissingArtifact { path: PathBuf, reason: String },
    #[error("run blew up: {0}")]
    BlowUp(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::BlowUp(_) => 3,
            HarnessError::MissingArtifact { .. } => 4,
            HarnessError::Runtime(_) | HarnessError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                HarnessError::MissingArtifact { path, reason: source.to_string() }
            } else {
                HarnessError::Io { path, source }
            }
        }
    }
}

impl From<SpectralError> for HarnessError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidConfig { .. } => HarnessError::Config(e.to_string()),
            SpectralError::NonFinite => HarnessError::BlowUp(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<SacError> for HarnessError {
    fn from(e: SacError) -> Self {
        match e {
            SacError::InvalidConfig { .. } | SacError::IncompatibleShapes(_) => HarnessError::Config(e.to_string()),
            SacError::Diverged(_) | SacError::NonFiniteObservation | SacError::Env(EnvError::NonFinite { .. }) => {
                HarnessError::BlowUp(e.to_string())
            }
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<TransferError> for HarnessError {
    fn from(e: TransferError) -> Self {
        match e {
            TransferError::Sac(s) => s.into(),
            TransferError::UnknownStrategy(_)
            | TransferError::IncompatibleShapes(_)
            | TransferError::MissingSource(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<AnalysisError> for HarnessError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Sac(s) => s.into(),
            AnalysisError::InvalidInput(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}
