use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Gradients;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// One bias-corrected Adam step on every entry named in `grads`.
///
/// Entries without a gradient are left untouched, moments included. A
/// gradient for a frozen or unknown entry is rejected before anything is
/// modified.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, cfg: &AdamConfig) -> Result<(), NnError> {
    for (name, g) in grads.iter() {
        let e = store.get(name)?;
        if !e.trainable {
            return Err(NnError::FrozenGradient(name.clone()));
        }
        if g.len() != e.numel() {
            return Err(NnError::ShapeMismatch {
                context: name.clone(),
                expected: e.shape.clone(),
                got: g.shape().to_vec(),
            });
        }
    }
    for (name, g) in grads.iter() {
        let e = store.get_mut(name)?;
        e.step += 1;
        let t = e.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, m), v), &gi) in e.values.iter_mut().zip(e.m.iter_mut()).zip(e.v.iter_mut()).zip(g.iter()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
