use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::spectral::io::Trajectory;
use crate::spectral::Fourier;

/// Largest wavenumber a grid of `n_low` points on a domain of length
/// `length` resolves.
pub fn cutoff_wavenumber(n_low: usize, length: f64) -> f64 {
    PI * n_low as f64 / (2.0 * length)
}

/// Splits every snapshot into modes with `|k| <= k_c` and the rest. The
/// small-scale part is the residual, so the two always sum to the input.
pub fn spectral_filter(traj: &Trajectory, n_low: usize) -> (Trajectory, Trajectory) {
    let kc = cutoff_wavenumber(n_low, traj.length);
    let mut fourier = Fourier::new(traj.n);
    let mut coeffs = vec![Complex64::default(); traj.n / 2 + 1];
    let mut large_row = vec![0.0; traj.n];
    let mut large = Trajectory::new(traj.length, traj.n);
    let mut small = Trajectory::new(traj.length, traj.n);
    for (t, s) in traj.times.iter().zip(traj.snapshots()) {
        fourier.forward(s, &mut coeffs);
        for (j, c) in coeffs.iter_mut().enumerate() {
            if 2.0 * PI * j as f64 / traj.length > kc {
                *c = Complex64::default();
            }
        }
        fourier.inverse(&coeffs, &mut large_row);
        let small_row: Vec<f64> = s.iter().zip(&large_row).map(|(u, l)| u - l).collect();
        large.push(*t, &large_row);
        small.push(*t, &small_row);
    }
    (large, small)
}
