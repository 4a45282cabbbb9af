//! Unforced equilibria `rhs(u, 0) = 0` found by Newton iteration.
//!
//! The search runs in the odd subspace `u(-x) = -u(x)`, i.e. purely
//! imaginary half-spectrum coefficients. That subspace is invariant under
//! the flow and removes the continuous translation symmetry, so the
//! Jacobian is generically nonsingular at an equilibrium.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{spectral_l2, SpectralField};
use super::solver::{KsConfig, KsSolver};
use super::SpectralError;

/// Resolution used for the Newton solve before resampling to a fidelity.
pub const NEWTON_RESOLUTION: usize = 128;
/// Residual accepted as an equilibrium at the Newton resolution.
pub const STEADY_TOLERANCE: f64 = 1e-9;

const MAX_NEWTON_ITERATIONS: usize = 60;

/// A named target profile and the uncontrolled distance used to normalize
/// the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState {
    pub name: ReferenceName,
    pub profile: SpectralField,
    pub d0_bar: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceName {
    U0,
    U1,
    U2,
    U3,
}

impl ReferenceName {
    pub const ALL: [ReferenceName; 4] = [Self::U0, Self::U1, Self::U2, Self::U3];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::U0 => "u0",
            Self::U1 => "u1",
            Self::U2 => "u2",
            Self::U3 => "u3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }

    fn from_rank(rank: usize) -> Option<Self> {
        [Self::U1, Self::U2, Self::U3].get(rank).copied()
    }
}

impl std::fmt::Display for ReferenceName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl ReferenceState {
    pub fn trivial(n: usize, length: f64) -> Self {
        Self { name: ReferenceName::U0, profile: SpectralField::zeros(n, length), d0_bar: None }
    }

    /// Same state on another grid.
    pub fn resampled(&self, n: usize) -> Self {
        Self { name: self.name, profile: self.profile.resampled(n), d0_bar: None }
    }
}

/// Grid-weighted norm of the unforced right-hand side.
pub fn steady_residual(solver: &mut KsSolver, field: &SpectralField) -> f64 {
    let d = solver.rhs_coeffs(field.coeffs(), None);
    spectral_l2(&d, solver.config().length)
}

/// Newton iteration from `seed`, restricted to odd fields. Returns the
/// converged field, which may be the trivial solution.
pub fn newton_equilibrium(solver: &mut KsSolver, seed: &SpectralField) -> Result<SpectralField, SpectralError> {
    let cfg = solver.config().clone();
    let half = cfg.n / 2;
    let unknowns = solver.cutoff();
    let length = cfg.length;

    // c_k = i y_k for k = 1..=unknowns.
    let mut y: Vec<f64> = (1..=unknowns).map(|k| seed.coeffs()[k].im).collect();
    let coeffs_of = |y: &[f64]| {
        let mut c = vec![Complex64::default(); half + 1];
        for (k, &v) in y.iter().enumerate() {
            c[k + 1] = Complex64::new(0.0, v);
        }
        c
    };
    let residual_of = |solver: &mut KsSolver, y: &[f64]| -> (Vec<f64>, f64) {
        let d = solver.rhs_coeffs(&coeffs_of(y), None);
        let r: Vec<f64> = (1..=unknowns).map(|k| d[k].im).collect();
        (r, spectral_l2(&d, length))
    };

    let (mut r, mut norm) = residual_of(solver, &y);
    let mut nl_base = vec![Complex64::default(); half + 1];
    let mut nl_pert = vec![Complex64::default(); half + 1];
    let mut nl_unit = vec![Complex64::default(); half + 1];
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if norm < 1e-13 {
            break;
        }
        // Exact Jacobian columns: the nonlinearity is quadratic, so
        // N(c + d) - N(c) - N(d) is its directional derivative.
        let base = coeffs_of(&y);
        solver.nonlinear_into(&base, None, &mut nl_base);
        let mut jac = DMatrix::<f64>::zeros(unknowns, unknowns);
        for col in 0..unknowns {
            let mut unit = vec![Complex64::default(); half + 1];
            unit[col + 1] = Complex64::new(0.0, 1.0);
            let mut shifted = base.clone();
            shifted[col + 1] += Complex64::new(0.0, 1.0);
            solver.nonlinear_into(&shifted, None, &mut nl_pert);
            solver.nonlinear_into(&unit, None, &mut nl_unit);
            for row in 0..unknowns {
                let k = row + 1;
                jac[(row, col)] = nl_pert[k].im - nl_base[k].im - nl_unit[k].im;
            }
            jac[(col, col)] += solver.linear_operator()[col + 1];
        }
        let rhs = DVector::from_column_slice(&r);
        let delta = jac.lu().solve(&rhs).ok_or(SpectralError::NoConvergence { residual: norm })?;

        let mut scale = 1.0;
        let mut accepted = false;
        while scale > 1e-4 {
            let trial: Vec<f64> = y.iter().zip(delta.iter()).map(|(a, d)| a - scale * d).collect();
            let (tr, tn) = residual_of(solver, &trial);
            if tn.is_finite() && tn < norm {
                y = trial;
                r = tr;
                norm = tn;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm >= STEADY_TOLERANCE || !norm.is_finite() {
        return Err(SpectralError::NoConvergence { residual: norm });
    }
    Ok(SpectralField::from_coeffs(coeffs_of(&y), cfg.n, length))
}

fn same_equilibrium(a: &SpectralField, b: &SpectralField) -> bool {
    // Mode magnitudes are invariant under translation and reflection.
    let diff: f64 = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x.norm() - y.norm()).powi(2)).sum();
    diff.sqrt() < 1e-6
}

/// Seeds `amp * sin(2 pi j x / L)` for low wavenumbers.
fn seeds(n: usize, length: f64) -> Vec<SpectralField> {
    let mut out = Vec::new();
    for j in 1..=3 {
        for amp in [0.5, 1.0, 1.5, 2.0, 3.0] {
            out.push(SpectralField::from_fn(n, length, |x| amp * (2.0 * PI * j as f64 * x / length).sin()));
        }
    }
    out
}

/// Nontrivial equilibria named `u1, u2, ...` in order of dominant
/// wavenumber index, then L2 norm. Profiles are solved at
/// [`NEWTON_RESOLUTION`] and resampled to `cfg.n`.
pub fn find_steady_states(cfg: &KsConfig) -> Result<Vec<ReferenceState>, SpectralError> {
    let fine_cfg = KsConfig { n: NEWTON_RESOLUTION, ..cfg.clone() };
    let mut solver = KsSolver::new(fine_cfg)?;
    let mut found: Vec<SpectralField> = Vec::new();
    for seed in seeds(NEWTON_RESOLUTION, cfg.length) {
        let Ok(eq) = newton_equilibrium(&mut solver, &seed) else {
            continue;
        };
        if eq.l2_norm() < 1e-6 {
            continue;
        }
        if !found.iter().any(|f| same_equilibrium(f, &eq)) {
            found.push(eq);
        }
    }
    if found.is_empty() {
        return Err(SpectralError::NoConvergence { residual: f64::NAN });
    }
    found.sort_by(|a, b| a.dominant_index().cmp(&b.dominant_index()).then(a.l2_norm().total_cmp(&b.l2_norm())));
    let mut coarse_solver = KsSolver::new(cfg.clone())?;
    Ok(found
        .into_iter()
        .enumerate()
        .filter_map(|(rank, profile)| {
            ReferenceName::from_rank(rank).map(|name| ReferenceState {
                name,
                profile: polish(&mut coarse_solver, profile.resampled(cfg.n)),
                d0_bar: None,
            })
        })
        .collect())
}

/// Truncation leaves an O(1e-2) residual on coarse grids. A Newton solve on
/// the coarse grid seeded from the resampled profile removes it; the
/// resample is kept if that solve fails or drifts to another branch.
fn polish(solver: &mut KsSolver, resampled: SpectralField) -> SpectralField {
    if resampled.n() == NEWTON_RESOLUTION {
        return resampled;
    }
    match newton_equilibrium(solver, &resampled) {
        Ok(p) => {
            let drift = SpectralField::from_coeffs(
                p.coeffs().iter().zip(resampled.coeffs()).map(|(a, b)| a - b).collect(),
                p.n(),
                p.length(),
            )
            .l2_norm();
            if drift < 0.1 * resampled.l2_norm() {
                p
            } else {
                log::warn!("coarse Newton polish drifted by {drift:.3e}; keeping resampled profile");
                resampled
            }
        }
        Err(e) => {
            log::warn!("coarse Newton polish failed ({e}); keeping resampled profile");
            resampled
        }
    }
}

/// Looks up one named reference (including the trivial `u0`) for `cfg`.
pub fn reference_state(cfg: &KsConfig, name: ReferenceName) -> Result<ReferenceState, SpectralError> {
    if name == ReferenceName::U0 {
        return Ok(ReferenceState::trivial(cfg.n, cfg.length));
    }
    find_steady_states(cfg)?.into_iter().find(|r| r.name == name).ok_or(SpectralError::MissingReference(name))
}
