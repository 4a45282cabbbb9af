//! Forced Kuramoto-Sivashinsky right-hand side and the semi-implicit RK3
//! integrator.
//!
//! `u_t = -u u_x - u_xx - lambda u_xxxx + phi`, periodic on `[0, L)`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{wavenumbers, Fourier, SpectralField};
use super::SpectralError;

/// Physical and numerical parameters of one environment fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KsConfig {
    pub length: f64,
    pub n: usize,
    pub lambda: f64,
    pub dt_solution: f64,
    pub substeps_per_control: usize,
    pub episode_length: usize,
    pub burn_in_time: f64,
    pub noise_amplitude: f64,
}

impl Default for KsConfig {
    fn default() -> Self {
        Self {
            length: 22.0,
            n: 64,
            lambda: 1.0,
            dt_solution: 0.05,
            substeps_per_control: 5,
            episode_length: 1024,
            burn_in_time: 250.0,
            noise_amplitude: 1e-8,
        }
    }
}

impl KsConfig {
    pub fn with_n(n: usize) -> Self {
        Self { n, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let bad = |field: &'static str, reason: String| Err(SpectralError::InvalidConfig { field, reason });
        if self.n < 8 || !self.n.is_multiple_of(2) {
            return bad("n", format!("must be even and >= 8, got {}", self.n));
        }
        if !(self.length > 0.0) {
            return bad("length", format!("must be positive, got {}", self.length));
        }
        if !(self.dt_solution > 0.0) {
            return bad("dt_solution", format!("must be positive, got {}", self.dt_solution));
        }
        if self.substeps_per_control == 0 {
            return bad("substeps_per_control", "must be at least 1".into());
        }
        if !(self.lambda > 0.0) {
            return bad("lambda", format!("must be positive, got {}", self.lambda));
        }
        if self.episode_length == 0 {
            return bad("episode_length", "must be at least 1".into());
        }
        if !(self.burn_in_time >= 0.0) {
            return bad("burn_in_time", format!("must be non-negative, got {}", self.burn_in_time));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn dt_control(&self) -> f64 {
        self.dt_solution * self.substeps_per_control as f64
    }

    /// Number of solver steps covering `time` (rounded to nearest).
    pub fn solver_steps_for(&self, time: f64) -> usize {
        (time / self.dt_solution).round() as usize
    }
}

/// Largest mode index kept by the 2/3 rule on an `n`-point grid. Products
/// of modes `<= K` alias only into indices above `K` when `3K < n`.
pub fn dealias_cutoff(n: usize) -> usize {
    (n - 1) / 3
}

// Spalart-Moser-Rogers low-storage coefficients.
const ALPHA: [f64; 3] = [29.0 / 96.0, -3.0 / 40.0, 1.0 / 6.0];
const BETA: [f64; 3] = [37.0 / 160.0, 5.0 / 24.0, 1.0 / 6.0];
const GAMMA: [f64; 3] = [8.0 / 15.0, 5.0 / 12.0, 3.0 / 4.0];
const ZETA: [f64; 3] = [0.0, -17.0 / 60.0, -5.0 / 12.0];

/// Pseudo-spectral operator set for a fixed `KsConfig`, with work buffers.
#[derive(Debug, Clone)]
pub struct KsSolver {
    cfg: KsConfig,
    fourier: Fourier,
    wavenumber: Vec<f64>,
    linear: Vec<f64>,
    cutoff: usize,
    grid: Vec<f64>,
    spec: Vec<Complex64>,
    stage_prev: Vec<Complex64>,
    stage_cur: Vec<Complex64>,
}

impl KsSolver {
    pub fn new(cfg: KsConfig) -> Result<Self, SpectralError> {
        cfg.validate()?;
        let n = cfg.n;
        let wavenumber = wavenumbers(n, cfg.length);
        let linear = wavenumber.iter().map(|k| k * k - cfg.lambda * k.powi(4)).collect();
        Ok(Self {
            fourier: Fourier::new(n),
            wavenumber,
            linear,
            cutoff: dealias_cutoff(n),
            grid: vec![0.0; n],
            spec: vec![Complex64::default(); n / 2 + 1],
            stage_prev: vec![Complex64::default(); n / 2 + 1],
            stage_cur: vec![Complex64::default(); n / 2 + 1],
            cfg,
        })
    }

    pub fn config(&self) -> &KsConfig {
        &self.cfg
    }

    /// Diagonal of the linear operator, `k^2 - lambda k^4`.
    pub fn linear_operator(&self) -> &[f64] {
        &self.linear
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumber
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn fourier(&mut self) -> &mut Fourier {
        &mut self.fourier
    }

    /// Half spectrum of a physical-space forcing vector.
    pub fn forcing_spectrum(&mut self, forcing: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.cfg.n / 2 + 1];
        self.fourier.forward(forcing, &mut out);
        out
    }

    /// Dealiased `-(ik/2) DFT(u^2)` plus the forcing spectrum, written to `out`.
    pub fn nonlinear_into(&mut self, coeffs: &[Complex64], forcing_hat: Option<&[Complex64]>, out: &mut [Complex64]) {
        let k_max = self.cutoff;
        for (k, s) in self.spec.iter_mut().enumerate() {
            *s = if k <= k_max { coeffs[k] } else { Complex64::default() };
        }
        self.fourier.inverse(&self.spec, &mut self.grid);
        for v in &mut self.grid {
            *v *= *v;
        }
        self.fourier.forward(&self.grid, &mut self.spec);
        for (k, o) in out.iter_mut().enumerate() {
            *o = if k <= k_max {
                Complex64::new(0.0, -0.5 * self.wavenumber[k]) * self.spec[k]
            } else {
                Complex64::default()
            };
        }
        if let Some(f) = forcing_hat {
            for (o, fk) in out.iter_mut().zip(f) {
                *o += fk;
            }
        }
    }

    /// Full time derivative of the spectral state.
    pub fn rhs_coeffs(&mut self, coeffs: &[Complex64], forcing_hat: Option<&[Complex64]>) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); coeffs.len()];
        self.nonlinear_into(coeffs, forcing_hat, &mut out);
        for ((o, c), l) in out.iter_mut().zip(coeffs).zip(&self.linear) {
            *o += c * *l;
        }
        out
    }

    pub fn rhs(&mut self, field: &SpectralField, forcing: &[f64]) -> SpectralField {
        let forcing_hat = self.forcing_spectrum(forcing);
        let d = self.rhs_coeffs(field.coeffs(), Some(&forcing_hat));
        SpectralField::from_coeffs(d, self.cfg.n, self.cfg.length)
    }

    /// Advances `coeffs` by one `dt_solution` with forcing held constant.
    pub fn step_coeffs(
        &mut self,
        coeffs: &mut [Complex64],
        forcing_hat: Option<&[Complex64]>,
    ) -> Result<(), SpectralError> {
        let dt = self.cfg.dt_solution;
        let mut cur = std::mem::take(&mut self.stage_cur);
        let mut prev = std::mem::take(&mut self.stage_prev);
        for s in 0..3 {
            self.nonlinear_into(coeffs, forcing_hat, &mut cur);
            for k in 0..coeffs.len() {
                let l = self.linear[k];
                let mut acc = coeffs[k] + (cur[k] * GAMMA[s] + coeffs[k] * (ALPHA[s] * l)) * dt;
                if s > 0 {
                    acc += prev[k] * (ZETA[s] * dt);
                }
                coeffs[k] = acc / (1.0 - BETA[s] * dt * l);
            }
            std::mem::swap(&mut cur, &mut prev);
        }
        self.stage_cur = cur;
        self.stage_prev = prev;
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        Ok(())
    }

    pub fn step(&mut self, field: &SpectralField, forcing: &[f64]) -> Result<SpectralField, SpectralError> {
        let forcing_hat = self.forcing_spectrum(forcing);
        let mut coeffs = field.coeffs().to_vec();
        self.step_coeffs(&mut coeffs, Some(&forcing_hat))?;
        Ok(SpectralField::from_coeffs(coeffs, self.cfg.n, self.cfg.length))
    }

    pub fn grid_values(&mut self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cfg.n];
        self.fourier.inverse(coeffs, &mut out);
        out
    }
}
