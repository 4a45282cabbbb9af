//! Tanh-squashed diagonal Gaussian policy heads.
//!
//! Actions are produced in the normalized box [-1, 1]; the environment
//! scales them by its bound. Log-densities are with respect to the
//! normalized action.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::nn::tape::log_one_minus_tanh_sq;
use crate::nn::{Mlp, NnError, ParamStore, Tape, Var};
use crate::pnn::{PnnError, ProgressiveActor};

/// Actor network layout. Outputs are `[mean | log_std]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Policy {
    Mlp(Mlp),
    Progressive(ProgressiveActor),
}

impl Policy {
    pub fn input_dim(&self) -> usize {
        match self {
            Policy::Mlp(m) => m.input_dim(),
            Policy::Progressive(p) => p.input_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Policy::Mlp(m) => m.output_dim() / 2,
            Policy::Progressive(p) => p.output_dim() / 2,
        }
    }

    pub fn forward_batch(&self, store: &ParamStore, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, PnnError> {
        match self {
            Policy::Mlp(m) => Ok(m.forward_batch(store, x)?),
            Policy::Progressive(p) => p.forward_batch(store, x),
        }
    }

    pub fn record(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, PnnError> {
        match self {
            Policy::Mlp(m) => Ok(m.record(tape, store, x, true)?),
            Policy::Progressive(p) => p.record(tape, store, x),
        }
    }

    pub fn check(&self, store: &ParamStore) -> Result<(), PnnError> {
        match self {
            Policy::Mlp(m) => Ok(m.check(store)?),
            Policy::Progressive(p) => p.check(store),
        }
    }
}

pub const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of `a = tanh(z)`, `z ~ N(mean, exp(log_std)^2)`, per
/// component, evaluated at the pre-squash sample `z`.
pub fn squashed_log_prob_component(z: f64, mean: f64, log_std: f64) -> f64 {
    let e = (z - mean) / log_std.exp();
    -0.5 * e * e - log_std - HALF_LOG_TWO_PI - log_one_minus_tanh_sq(z)
}

/// Log-density of a normalized action `a` in (-1, 1), for tests and
/// diagnostics.
pub fn squashed_log_density(a: f64, mean: f64, log_std: f64) -> f64 {
    squashed_log_prob_component(a.atanh(), mean, log_std)
}

/// Samples (or takes the mode of) the squashed Gaussian for each row of
/// `head = [mean | log_std]`. Returns normalized actions and row log-probs.
/// Largest normalized action magnitude; `tanh` rounds to exactly 1 in f64
/// once |z| exceeds about 19.
pub const MAX_NORMALIZED: f64 = 1.0 - f64::EPSILON;

pub fn squash_sample(
    head: &Array2<f64>,
    eps: Option<&Array2<f64>>,
    log_std_bounds: (f64, f64),
) -> (Array2<f64>, Vec<f64>) {
    let d = head.ncols() / 2;
    let mean = head.slice(s![.., ..d]);
    let log_std = head.slice(s![.., d..]).mapv(|v| v.clamp(log_std_bounds.0, log_std_bounds.1));
    let b = head.nrows();
    let mut actions = Array2::zeros((b, d));
    let mut logp = vec![0.0; b];
    for r in 0..b {
        for c in 0..d {
            let e = eps.map_or(0.0, |e| e[[r, c]]);
            let z = mean[[r, c]] + log_std[[r, c]].exp() * e;
            actions[[r, c]] = z.tanh().clamp(-MAX_NORMALIZED, MAX_NORMALIZED);
            logp[r] += -0.5 * e * e - log_std[[r, c]] - HALF_LOG_TWO_PI - log_one_minus_tanh_sq(z);
        }
    }
    (actions, logp)
}

/// Records the reparameterized sample on `tape`: returns the normalized
/// action `[B, d]` and its log-probability `[B, 1]`.
pub fn record_squash(
    tape: &mut Tape,
    head: Var,
    eps: &Array2<f64>,
    log_std_bounds: (f64, f64),
) -> Result<(Var, Var), NnError> {
    let d = eps.ncols();
    let mean = tape.slice_cols(head, 0, d);
    let raw = tape.slice_cols(head, d, 2 * d);
    let log_std = tape.clamp(raw, log_std_bounds.0, log_std_bounds.1);
    let std = tape.exp(log_std);
    let e = tape.constant(eps.clone());
    let noise = tape.mul(std, e)?;
    let z = tape.add(mean, noise)?;
    let action = tape.tanh(z);
    let jac = tape.log_one_minus_tanh_sq(z);
    let base = tape.constant(eps.mapv(|v| -0.5 * v * v - HALF_LOG_TWO_PI));
    let t = tape.sub(base, log_std)?;
    let per = tape.sub(t, jac)?;
    let logp = tape.sum_cols(per);
    Ok((action, logp))
}
