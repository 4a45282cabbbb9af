use std::path::{Path, PathBuf};

use super::manifest::content_hash;
use super::{EnvBlock, HarnessError};
use crate::par::Execution;
use crate::spectral::io::{load_refstates, save_refstates, RefStateRecord};
use crate::spectral::{calibrated_reference, reference_state, ReferenceState};

/// Cache file for the calibrated reference of `env`; the name hashes every
/// setting that affects the profile or its normalization.
pub fn reference_cache_path(cache_dir: &Path, env: &EnvBlock) -> PathBuf {
    let key = content_hash(&toml::to_string(env).expect("env block serializes"));
    cache_dir.join(format!("ref-{}.bin", &key[..16]))
}

/// Reference profile with its reward normalization, computed once per
/// environment setting and then read back from `cache_dir`.
pub fn cached_reference(cache_dir: &Path, env: &EnvBlock, exec: Execution) -> Result<ReferenceState, HarnessError> {
    let path = reference_cache_path(cache_dir, env);
    if let Ok(mut records) = load_refstates(&path) {
        if let Some(r) = records.pop().filter(|r| r.state.d0_bar.is_some() && r.state.name == env.reference) {
            return Ok(r.state);
        }
        log::warn!("ignoring unusable cache entry {}", path.display());
    }
    let cfg = env.ks();
    log::info!("computing reference {} and d0 for N={} lambda={}", env.reference, cfg.n, cfg.lambda);
    let state = calibrated_reference(&cfg, reference_state(&cfg, env.reference)?, exec)?;
    std::fs::create_dir_all(cache_dir).map_err(HarnessError::io(cache_dir))?;
    let rec = RefStateRecord { length: cfg.length, lambda: cfg.lambda, state: state.clone() };
    save_refstates(&path, &[rec]).map_err(HarnessError::io(&path))?;
    Ok(state)
}
