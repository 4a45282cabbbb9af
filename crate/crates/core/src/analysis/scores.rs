use serde::{Deserialize, Serialize};

use super::{Aggregate, AnalysisError};

/// Fraction of the horizon a curve may fall short by; the last value is
/// held over the gap.
const COVERAGE_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub method: String,
    pub source: Option<String>,
    pub source_steps: Option<u64>,
    pub horizon: f64,
    pub transfer_score: Option<f64>,
    pub final_return_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retention_score: Option<f64>,
}

fn check_coverage(c: &Aggregate, horizon: f64) -> Result<(), AnalysisError> {
    let last = c.last_step().ok_or(AnalysisError::EmptyCurve)?;
    if last < horizon * (1.0 - COVERAGE_SLACK) {
        return Err(AnalysisError::InsufficientCoverage { last, horizon });
    }
    Ok(())
}

fn trapezoid(c: &Aggregate, grid: &[f64]) -> f64 {
    grid.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (c.mean_at(w[0]) + c.mean_at(w[1]))).sum()
}

/// Area under `curve` over `[0, horizon]` relative to `baseline`, both
/// evaluated on the union of their grids.
pub fn transfer_score(curve: &Aggregate, baseline: &Aggregate, horizon: f64) -> Result<f64, AnalysisError> {
    check_coverage(curve, horizon)?;
    check_coverage(baseline, horizon)?;
    let mut grid: Vec<f64> = curve
        .steps
        .iter()
        .chain(&baseline.steps)
        .copied()
        .filter(|&s| s > 0.0 && s < horizon)
        .chain([0.0, horizon])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let base = trapezoid(baseline, &grid);
    if base <= 0.0 || !base.is_finite() {
        return Err(AnalysisError::DegenerateBaseline(base));
    }
    Ok(trapezoid(curve, &grid) / base)
}

/// Mean of the aggregated curve over its last `window` grid points at or
/// before `horizon`.
pub fn final_return_score(curve: &Aggregate, horizon: f64, window: usize) -> Result<f64, AnalysisError> {
    let upto: Vec<f64> = curve.steps.iter().zip(&curve.mean).filter(|(s, _)| **s <= horizon).map(|(_, m)| *m).collect();
    if upto.is_empty() {
        return Err(AnalysisError::EmptyCurve);
    }
    let tail = &upto[upto.len().saturating_sub(window.max(1))..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}
