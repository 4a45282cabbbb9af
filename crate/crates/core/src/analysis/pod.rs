use nalgebra::DMatrix;

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq)]
pub struct PodResult {
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// `N x r`, one spatial mode per column.
    pub modes: DMatrix<f64>,
    /// `T x r`, `U * Sigma`.
    pub temporal: DMatrix<f64>,
    pub energies: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Thin SVD of the deviation snapshots `X[t, :] = u(t) - reference`.
pub fn pod(snapshots: &DMatrix<f64>, reference: &[f64]) -> Result<PodResult, AnalysisError> {
    let (t, n) = snapshots.shape();
    if t < 2 {
        return Err(AnalysisError::InvalidInput(format!("need at least two snapshots, got {t}")));
    }
    if reference.len() != n {
        return Err(AnalysisError::InvalidInput(format!("reference has {} points, snapshots {n}", reference.len())));
    }
    let x = DMatrix::from_fn(t, n, |i, j| snapshots[(i, j)] - reference[j]);
    let svd = x.svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let modes = DMatrix::from_fn(n, order.len(), |r, c| vt[(order[c], r)]);
    let temporal = DMatrix::from_fn(t, order.len(), |r, c| u[(r, order[c])] * singular_values[c]);
    let energies: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
    let total: f64 = energies.iter().sum();
    let mut acc = 0.0;
    let cumulative = energies
        .iter()
        .map(|e| {
            acc += e;
            if total > 0.0 {
                (acc / total).min(1.0)
            } else {
                1.0
            }
        })
        .collect();
    Ok(PodResult { singular_values, modes, temporal, energies, cumulative })
}

impl PodResult {
    /// Modes needed to reach `fraction` of the total energy.
    pub fn modes_for_fraction(&self, fraction: f64) -> usize {
        self.cumulative.iter().position(|&c| c >= fraction).map_or(self.cumulative.len(), |i| i + 1)
    }
}
