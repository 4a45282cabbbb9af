use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, HarnessError};

/// Hex SHA-256 of `blob <len>\0<content>`, the way git names blobs.
pub fn content_hash(content: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(HarnessError::io(&tmp))?;
        f.write_all(bytes).map_err(HarnessError::io(&tmp))?;
        f.sync_all().map_err(HarnessError::io(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(HarnessError::io(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "detail", rename_all = "lowercase")]
pub enum TrialState {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStatus {
    pub trial: usize,
    pub seed: u64,
    pub state: TrialState,
    pub env_steps: u64,
    pub gradient_updates: u64,
    pub episodes: usize,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialStatus>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: content_hash(&config.to_toml()),
            config: config.clone(),
            trials: Vec::new(),
            artifacts: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    /// Verifies every listed artifact exists, then writes the manifest.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        for a in &self.artifacts {
            let p = dir.join(a);
            if !p.exists() {
                return Err(HarnessError::MissingArtifact {
                    path: p,
                    reason: "listed in manifest but not written".into(),
                });
            }
        }
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(Self::FILE), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(Self::FILE);
        let text = fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::MissingArtifact { path, reason: format!("unreadable manifest: {e}") })
    }
}
