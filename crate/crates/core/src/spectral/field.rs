//! Real periodic fields stored as a normalized half spectrum.
//!
//! Coefficients follow `u(x) = sum_k c_k exp(i k 2 pi x / L)` over
//! `k = -N/2+1 ..= N/2`, so `c_k = (1/N) sum_j u_j exp(-2 pi i j k / N)`.
//! Only `k = 0..=N/2` is stored; negative indices are conjugates.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse real transforms of a fixed length with reusable scratch.
#[derive(Clone)]
pub struct Fourier {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("n", &self.n).finish()
    }
}

impl Fourier {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n.is_multiple_of(2), "transform length must be even, got {n}");
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self { n, fwd, inv, buf: vec![Complex64::default(); n], scratch: vec![Complex64::default(); scratch_len] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Grid values to the normalized half spectrum (`N/2 + 1` entries).
    pub fn forward(&mut self, values: &[f64], out: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(values.len(), n);
        debug_assert_eq!(out.len(), n / 2 + 1);
        for (b, &v) in self.buf.iter_mut().zip(values) {
            *b = Complex64::new(v, 0.0);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / n as f64;
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b * scale;
        }
        out[0].im = 0.0;
        out[n / 2].im = 0.0;
    }

    /// Normalized half spectrum back to grid values. Imaginary parts of the
    /// mean and Nyquist entries are ignored.
    pub fn inverse(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        let n = self.n;
        let half = n / 2;
        debug_assert_eq!(coeffs.len(), half + 1);
        debug_assert_eq!(out.len(), n);
        self.buf[0] = Complex64::new(coeffs[0].re, 0.0);
        for k in 1..half {
            self.buf[k] = coeffs[k];
            self.buf[n - k] = coeffs[k].conj();
        }
        self.buf[half] = Complex64::new(coeffs[half].re, 0.0);
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re;
        }
    }
}

/// Wavenumbers `2 pi k / L` for the stored half spectrum.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..=n / 2).map(|k| 2.0 * PI * k as f64 / length).collect()
}

/// A real field on a periodic grid of `N` collocation points, kept consistent
/// in physical and spectral space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    length: f64,
    coeffs: Vec<Complex64>,
    grid_values: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(n: usize, length: f64) -> Self {
        Self { length, coeffs: vec![Complex64::default(); n / 2 + 1], grid_values: vec![0.0; n] }
    }

    pub fn from_grid(values: Vec<f64>, length: f64) -> Self {
        let n = values.len();
        let mut coeffs = vec![Complex64::default(); n / 2 + 1];
        Fourier::new(n).forward(&values, &mut coeffs);
        let mut field = Self { length, coeffs, grid_values: values };
        // Round-trip so both views are exactly the same discrete function.
        field.refresh_grid();
        field
    }

    /// Builds a field from half-spectrum coefficients for an `n`-point grid.
    pub fn from_coeffs(mut coeffs: Vec<Complex64>, n: usize, length: f64) -> Self {
        assert_eq!(coeffs.len(), n / 2 + 1, "half spectrum length mismatch");
        coeffs[0].im = 0.0;
        coeffs[n / 2].im = 0.0;
        let mut field = Self { length, coeffs, grid_values: vec![0.0; n] };
        field.refresh_grid();
        field
    }

    /// Samples `f` at the grid nodes `x_j = j L / N`.
    pub fn from_fn(n: usize, length: f64, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|j| f(j as f64 * length / n as f64)).collect();
        Self::from_grid(values, length)
    }

    fn refresh_grid(&mut self) {
        let n = self.grid_values.len();
        Fourier::new(n).inverse(&self.coeffs, &mut self.grid_values);
    }

    pub fn n(&self) -> usize {
        self.grid_values.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n() as f64
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.grid_values
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Evaluates the trigonometric interpolant at an arbitrary position.
    /// The Nyquist mode enters as a cosine so grid nodes are reproduced
    /// exactly.
    pub fn evaluate_at(&self, x: f64) -> f64 {
        let n = self.n();
        let half = n / 2;
        let theta = 2.0 * PI * x / self.length;
        let mut acc = self.coeffs[0].re;
        for k in 1..half {
            let phase = Complex64::from_polar(1.0, theta * k as f64);
            acc += 2.0 * (self.coeffs[k] * phase).re;
        }
        acc + self.coeffs[half].re * (theta * half as f64).cos()
    }

    /// Keeps modes with index `k <= max_index`, zeroing the rest.
    pub fn truncated(&self, max_index: usize) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| if k <= max_index { c } else { Complex64::default() })
            .collect();
        Self::from_coeffs(coeffs, self.n(), self.length)
    }

    /// Spectral resampling onto an `n`-point grid. Downsampling drops every
    /// mode at or above the new Nyquist index; upsampling splits the old
    /// Nyquist cosine into a conjugate pair.
    pub fn resampled(&self, n: usize) -> Self {
        let old_half = self.n() / 2;
        let new_half = n / 2;
        let mut coeffs = vec![Complex64::default(); new_half + 1];
        if n <= self.n() {
            coeffs[..new_half].copy_from_slice(&self.coeffs[..new_half]);
            if n == self.n() {
                coeffs[new_half] = self.coeffs[new_half];
            }
        } else {
            coeffs[..old_half].copy_from_slice(&self.coeffs[..old_half]);
            coeffs[old_half] = Complex64::new(self.coeffs[old_half].re * 0.5, 0.0);
        }
        Self::from_coeffs(coeffs, n, self.length)
    }

    /// Grid-weighted L2 norm `sqrt(dx * sum u_j^2)`.
    pub fn l2_norm(&self) -> f64 {
        grid_l2(&self.grid_values, self.dx())
    }

    /// Index of the mode with the largest magnitude, excluding the mean.
    pub fn dominant_index(&self) -> usize {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .fold((0, 0.0), |(best, mag), (k, c)| if c.norm() > mag { (k, c.norm()) } else { (best, mag) })
            .0
    }
}

/// `sqrt(dx * sum v_j^2)`.
pub fn grid_l2(values: &[f64], dx: f64) -> f64 {
    (dx * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Grid-weighted L2 norm of a half spectrum via Parseval:
/// `dx * sum_j u_j^2 = L * sum_{k in full spectrum} |c_k|^2`.
pub fn spectral_l2(coeffs: &[Complex64], length: f64) -> f64 {
    let half = coeffs.len() - 1;
    let mut acc = coeffs[0].norm_sqr() + coeffs[half].re * coeffs[half].re;
    for c in &coeffs[1..half] {
        acc += 2.0 * c.norm_sqr();
    }
    (length * acc).sqrt()
}
