//! Average perturbation sensitivity: per hidden layer and column, the noise
//! level that halves task performance, turned into a precision and
//! normalized across columns.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::env::Environment;
use crate::par::Execution;
use crate::pnn::{Perturbation, ProgressiveActor};
use crate::sac::policy::MAX_NORMALIZED;
use crate::sac::{evaluate_with, Agent, Policy, SacError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApsConfig {
    /// One evaluation episode per seed, shared by every noise level.
    pub seeds: Vec<u64>,
    /// Relative performance drop defining the crossing.
    pub drop: f64,
    pub log10_sigma_min: f64,
    pub log10_sigma_max: f64,
    /// Relative tolerance on hitting the target return.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Precision assigned to cells whose performance never drops enough.
    pub lambda_min: f64,
    /// Returns are clamped at this level before measuring the drop.
    pub floor: f64,
}

impl Default for ApsConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            drop: 0.5,
            log10_sigma_min: -4.0,
            log10_sigma_max: 4.0,
            rel_tol: 0.05,
            max_iter: 40,
            lambda_min: 1e-8,
            floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApsStatus {
    Converged,
    /// Already at or below the target at the smallest noise level.
    BelowBracket,
    /// Never reached the target within the bracket; reported insensitive.
    NoCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsCell {
    pub layer: usize,
    pub column: usize,
    pub sigma: Option<f64>,
    pub lambda: f64,
    pub status: ApsStatus,
    /// Whether returns at the bracket ends and midpoint were non-increasing,
    /// up to the hit tolerance.
    pub monotone: bool,
    /// `(sigma, clamped mean return)` for every evaluation made.
    pub evaluations: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsMap {
    pub clean_return: f64,
    pub layers: usize,
    pub columns: usize,
    /// Row-major by layer.
    pub cells: Vec<ApsCell>,
    /// `aps[layer - 1][column - 1]`.
    pub aps: Vec<Vec<f64>>,
}

impl ApsMap {
    pub fn cell(&self, layer: usize, column: usize) -> &ApsCell {
        &self.cells[(layer - 1) * self.columns + column - 1]
    }

    pub fn score(&self, layer: usize, column: usize) -> f64 {
        self.aps[layer - 1][column - 1]
    }
}

fn progressive(agent: &Agent) -> Result<&ProgressiveActor, AnalysisError> {
    match &agent.policy {
        Policy::Progressive(p) => Ok(p),
        Policy::Mlp(_) => Err(AnalysisError::InvalidInput("perturbation analysis needs a progressive actor".into())),
    }
}

/// Mean deterministic return with noise of width `sigma` on one hidden
/// layer (no noise when `sigma` is zero).
fn perturbed_return<E: Environment + Sync>(
    agent: &Agent,
    env: &E,
    pert: Perturbation,
    seeds: &[u64],
    exec: Execution,
) -> Result<f64, AnalysisError> {
    let pnn = progressive(agent)?;
    let d = agent.act_dim;
    let returns = evaluate_with(env, seeds, exec, |obs, rng| {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let head = pnn.forward_perturbed(&agent.actor, x, Some((&pert, rng))).map_err(SacError::from)?;
        Ok((0..d).map(|c| agent.action_bound * head[[0, c]].tanh().clamp(-MAX_NORMALIZED, MAX_NORMALIZED)).collect())
    })?;
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}

/// Clean deterministic return with the same seeds as the noisy runs.
pub fn clean_return<E: Environment + Sync>(
    agent: &Agent,
    env: &E,
    cfg: &ApsConfig,
    exec: Execution,
) -> Result<f64, AnalysisError> {
    perturbed_return(agent, env, Perturbation { column: 1, layer: 1, sigma: 0.0 }, &cfg.seeds, exec)
}

/// Bisects `log10 sigma` for the noise level on (`layer`, `column`) that
/// brings the clamped return to `floor + (1 - drop) (clean - floor)`.
pub fn aps_cell<E: Environment + Sync>(
    agent: &Agent,
    env: &E,
    layer: usize,
    column: usize,
    clean: f64,
    cfg: &ApsConfig,
    exec: Execution,
) -> Result<ApsCell, AnalysisError> {
    let pnn = progressive(agent)?;
    if layer == 0 || layer > pnn.hidden_layers() || column == 0 || column > pnn.num_columns() {
        return Err(AnalysisError::InvalidInput(format!("no hidden layer {layer} in column {column}")));
    }
    if cfg.seeds.is_empty() {
        return Err(AnalysisError::InvalidInput("APS needs at least one evaluation seed".into()));
    }
    if clean <= cfg.floor {
        return Err(AnalysisError::InvalidInput(format!(
            "clean return {clean} does not exceed the floor {}",
            cfg.floor
        )));
    }
    let target = cfg.floor + (1.0 - cfg.drop) * (clean - cfg.floor);
    let tol = cfg.rel_tol * target.abs().max(f64::EPSILON);
    let mut evaluations = Vec::new();
    let mut eval = |log_sigma: f64| -> Result<f64, AnalysisError> {
        let sigma = 10f64.powf(log_sigma);
        let r = perturbed_return(agent, env, Perturbation { column, layer, sigma }, &cfg.seeds, exec)?.max(cfg.floor);
        evaluations.push((sigma, r));
        Ok(r)
    };
    let (mut lo, mut hi) = (cfg.log10_sigma_min, cfg.log10_sigma_max);
    let r_lo = eval(lo)?;
    let r_hi = eval(hi)?;
    let r_mid = eval(0.5 * (lo + hi))?;
    let monotone = r_lo + tol >= r_mid && r_mid + tol >= r_hi;
    let cell = |sigma: Option<f64>, status, evaluations| ApsCell {
        layer,
        column,
        sigma,
        lambda: sigma.map_or(cfg.lambda_min, |s| (1.0 / (s * s)).max(cfg.lambda_min)),
        status,
        monotone,
        evaluations,
    };
    if r_hi > target + tol {
        return Ok(cell(None, ApsStatus::NoCrossing, evaluations));
    }
    if r_lo <= target + tol {
        let status = if (r_lo - target).abs() <= tol { ApsStatus::Converged } else { ApsStatus::BelowBracket };
        return Ok(cell(Some(10f64.powf(lo)), status, evaluations));
    }
    let mut mid = 0.5 * (lo + hi);
    let mut r = r_mid;
    for _ in 0..cfg.max_iter {
        if (r - target).abs() <= tol {
            break;
        }
        if r > target {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        r = eval(mid)?;
    }
    let status = if (r - target).abs() <= tol || hi - lo < 1e-6 { ApsStatus::Converged } else { ApsStatus::NoCrossing };
    let sigma = (status == ApsStatus::Converged).then(|| 10f64.powf(mid));
    Ok(cell(sigma, status, evaluations))
}

/// Sensitivity map over every hidden layer and column.
pub fn aps_map<E: Environment + Sync>(
    agent: &Agent,
    env: &E,
    cfg: &ApsConfig,
    exec: Execution,
) -> Result<ApsMap, AnalysisError> {
    let pnn = progressive(agent)?;
    let (layers, columns) = (pnn.hidden_layers(), pnn.num_columns());
    let clean = clean_return(agent, env, cfg, exec)?;
    let mut cells = Vec::with_capacity(layers * columns);
    for layer in 1..=layers {
        for column in 1..=columns {
            let c = aps_cell(agent, env, layer, column, clean, cfg, exec)?;
            log::info!("APS layer {layer} column {column}: {:?} sigma {:?}", c.status, c.sigma);
            cells.push(c);
        }
    }
    let aps = cells
        .chunks(columns)
        .map(|row| {
            let total: f64 = row.iter().map(|c| c.lambda).sum();
            row.iter().map(|c| c.lambda / total).collect()
        })
        .collect();
    Ok(ApsMap { clean_return: clean, layers, columns, cells, aps })
}

/// Mean deterministic return with every lateral gain out of source hidden
/// layer `l` set to zero, for each `l`. The first entry is the unablated
/// return under layer index 0.
pub fn ablation_returns<E: Environment + Sync>(
    agent: &Agent,
    env: &E,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<(usize, f64)>, AnalysisError> {
    let pnn = progressive(agent)?;
    let mean = |a: &Agent| -> Result<f64, AnalysisError> {
        let r = crate::sac::evaluate_deterministic(a, env, seeds, exec)?;
        Ok(r.iter().sum::<f64>() / r.len() as f64)
    };
    let mut out = vec![(0, mean(agent)?)];
    for l in 1..=pnn.hidden_layers() {
        let mut ablated = agent.clone();
        for j in 1..pnn.num_columns() {
            pnn.set_adapter_gain(&mut ablated.actor, l + 1, j, 0.0)?;
        }
        out.push((l, mean(&ablated)?));
    }
    Ok(out)
}
