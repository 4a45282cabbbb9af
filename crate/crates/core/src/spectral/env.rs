//! The forced KS system as a control environment: Gaussian actuators,
//! point sensors and a normalized L2-deviation reward.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::field::{grid_l2, SpectralField};
use super::solver::{KsConfig, KsSolver};
use super::steady::ReferenceState;
use super::SpectralError;
use crate::env::{EnvError, Environment, Step};
use crate::par::{par_map, Execution};

/// Seeds used for reward-normalization runs: `D0_SEED_BASE + i`.
pub const D0_SEED_BASE: u64 = 0x00D0_0000;
/// Episodes averaged when calibrating the reward normalization.
pub const D0_EPISODES: usize = 8;
/// Smallest accepted reward normalization.
pub const MIN_D0: f64 = 1e-12;

fn periodic_distance(a: f64, b: f64, length: f64) -> f64 {
    let d = (a - b).rem_euclid(length);
    d.min(length - d)
}

/// Gaussian forcing kernels sampled on the grid, one column per actuator.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorBank {
    pub positions: Vec<f64>,
    pub sigma: f64,
    pub amplitude_bound: f64,
    /// Row-major `N x n_actuators`.
    kernel: Vec<f64>,
    n: usize,
}

impl ActuatorBank {
    pub fn new(positions: Vec<f64>, sigma: f64, amplitude_bound: f64, n: usize, length: f64) -> Self {
        // Prefactor is 1/sqrt(2 pi sigma), as written for this forcing.
        let prefactor = 1.0 / (2.0 * PI * sigma).sqrt();
        let m = positions.len();
        let mut kernel = vec![0.0; n * m];
        for j in 0..n {
            let x = j as f64 * length / n as f64;
            for (i, &p) in positions.iter().enumerate() {
                let d = periodic_distance(x, p, length);
                kernel[j * m + i] = prefactor * (-d * d / (2.0 * sigma * sigma)).exp();
            }
        }
        Self { positions, sigma, amplitude_bound, kernel, n }
    }

    /// Four actuators at `{0,1,2,3} L/4`, width 0.4, amplitudes in `[-0.5, 0.5]`.
    pub fn standard(cfg: &KsConfig) -> Self {
        let positions = (0..4).map(|i| i as f64 * cfg.length / 4.0).collect();
        Self::new(positions, 0.4, 0.5, cfg.n, cfg.length)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn kernel(&self, grid_index: usize, actuator: usize) -> f64 {
        self.kernel[grid_index * self.len() + actuator]
    }

    /// Forcing `phi(x_j) = sum_i a_i K(x_j, x_i)`.
    pub fn forcing(&self, amplitudes: &[f64]) -> Vec<f64> {
        let m = self.len();
        (0..self.n).map(|j| self.kernel[j * m..(j + 1) * m].iter().zip(amplitudes).map(|(k, a)| k * a).sum()).collect()
    }
}

/// Point sensors read through the trigonometric interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    pub positions: Vec<f64>,
}

impl SensorArray {
    /// Eight sensors at `{1,3,...,15} L/16`.
    pub fn standard(cfg: &KsConfig) -> Self {
        Self { positions: (0..8).map(|i| (2 * i + 1) as f64 * cfg.length / 16.0).collect() }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn read(&self, field: &SpectralField) -> Vec<f64> {
        self.positions.iter().map(|&x| field.evaluate_at(x)).collect()
    }
}

/// Uncontrolled or controlled KS trajectory state with its solver.
#[derive(Debug, Clone)]
pub struct Simulation {
    solver: KsSolver,
    coeffs: Vec<Complex64>,
    time: f64,
}

impl Simulation {
    pub fn new(cfg: KsConfig) -> Result<Self, SpectralError> {
        let n = cfg.n;
        Ok(Self { solver: KsSolver::new(cfg)?, coeffs: vec![Complex64::default(); n / 2 + 1], time: 0.0 })
    }

    pub fn config(&self) -> &KsConfig {
        self.solver.config()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn solver_mut(&mut self) -> &mut KsSolver {
        &mut self.solver
    }

    /// Gaussian white-noise initial condition scaled by `noise_amplitude`.
    pub fn initialize(&mut self, seed: u64) {
        let cfg = self.solver.config().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..cfg.n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cfg.noise_amplitude * z
            })
            .collect();
        self.solver.fourier().forward(&values, &mut self.coeffs);
        self.time = 0.0;
    }

    pub fn set_field(&mut self, field: &SpectralField) {
        assert_eq!(field.n(), self.config().n);
        self.coeffs.copy_from_slice(field.coeffs());
        self.time = 0.0;
    }

    pub fn advance(&mut self, solver_steps: usize, forcing_hat: Option<&[Complex64]>) -> Result<(), SpectralError> {
        for _ in 0..solver_steps {
            self.solver.step_coeffs(&mut self.coeffs, forcing_hat)?;
            self.time += self.solver.config().dt_solution;
        }
        Ok(())
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn field(&self) -> SpectralField {
        let cfg = self.config();
        SpectralField::from_coeffs(self.coeffs.clone(), cfg.n, cfg.length)
    }

    pub fn grid_values(&mut self) -> Vec<f64> {
        let coeffs = self.coeffs.clone();
        self.solver.grid_values(&coeffs)
    }
}

/// Episodic KS control task.
#[derive(Debug, Clone)]
pub struct KsEnv {
    sim: Simulation,
    actuators: ActuatorBank,
    sensors: SensorArray,
    reference: ReferenceState,
    d0_bar: f64,
    steps: usize,
    strict_actions: bool,
}

impl KsEnv {
    /// `reference.d0_bar` must be set and larger than [`MIN_D0`].
    pub fn new(cfg: KsConfig, reference: ReferenceState) -> Result<Self, SpectralError> {
        let d0_bar = reference.d0_bar.unwrap_or(0.0);
        if !(d0_bar > MIN_D0) {
            return Err(SpectralError::DegenerateNormalization(d0_bar));
        }
        if reference.profile.n() != cfg.n {
            return Err(SpectralError::InvalidConfig {
                field: "n",
                reason: format!("reference has {} points, environment {}", reference.profile.n(), cfg.n),
            });
        }
        Ok(Self {
            actuators: ActuatorBank::standard(&cfg),
            sensors: SensorArray::standard(&cfg),
            sim: Simulation::new(cfg)?,
            reference,
            d0_bar,
            steps: 0,
            strict_actions: false,
        })
    }

    /// Reject out-of-range actions instead of trusting the caller to clip.
    pub fn with_strict_actions(mut self, strict: bool) -> Self {
        self.strict_actions = strict;
        self
    }

    pub fn config(&self) -> &KsConfig {
        self.sim.config()
    }

    pub fn reference(&self) -> &ReferenceState {
        &self.reference
    }

    pub fn d0_bar(&self) -> f64 {
        self.d0_bar
    }

    pub fn actuators(&self) -> &ActuatorBank {
        &self.actuators
    }

    pub fn sensors(&self) -> &SensorArray {
        &self.sensors
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn field(&self) -> SpectralField {
        self.sim.field()
    }

    pub fn control_steps(&self) -> usize {
        self.steps
    }

    /// Replaces the current state, e.g. to evaluate the reward at a
    /// prescribed field.
    pub fn set_field(&mut self, field: &SpectralField) {
        self.sim.set_field(field);
    }

    pub fn observe(&self) -> Vec<f64> {
        self.sensors.read(&self.sim.field())
    }

    pub fn distance_to_reference(&mut self) -> f64 {
        let dx = self.config().dx();
        let values = self.sim.grid_values();
        let diff: Vec<f64> = values.iter().zip(self.reference.profile.grid_values()).map(|(u, r)| u - r).collect();
        grid_l2(&diff, dx)
    }

    /// `1 - ||u - u_ref|| / d0`.
    pub fn reward(&mut self) -> f64 {
        1.0 - self.distance_to_reference() / self.d0_bar
    }
}

impl Environment for KsEnv {
    fn observation_dim(&self) -> usize {
        self.sensors.len()
    }

    fn action_dim(&self) -> usize {
        self.actuators.len()
    }

    fn action_bound(&self) -> f64 {
        self.actuators.amplitude_bound
    }

    fn episode_length(&self) -> usize {
        self.config().episode_length
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        self.sim.initialize(seed);
        let burn = self.config().solver_steps_for(self.config().burn_in_time);
        self.sim.advance(burn, None).map_err(|_| EnvError::NonFinite { step: 0 })?;
        self.steps = 0;
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError> {
        if action.len() != self.actuators.len() {
            return Err(EnvError::ActionDim { expected: self.actuators.len(), got: action.len() });
        }
        let bound = self.actuators.amplitude_bound;
        if self.strict_actions {
            if let Some((index, &value)) = action.iter().enumerate().find(|(_, a)| a.abs() > bound) {
                return Err(EnvError::ActionOutOfRange { index, value, low: -bound, high: bound });
            }
        }
        let forcing = self.actuators.forcing(action);
        let forcing_hat = self.sim.solver_mut().forcing_spectrum(&forcing);
        let substeps = self.config().substeps_per_control;
        self.sim.advance(substeps, Some(&forcing_hat)).map_err(|_| EnvError::NonFinite { step: self.steps })?;
        self.steps += 1;
        let reward = self.reward();
        Ok(Step { observation: self.observe(), reward, done: self.steps >= self.config().episode_length })
    }
}

/// Mean over episodes and control steps of the uncontrolled distance to
/// `reference`. Each episode starts from `reset(seed)` and runs
/// `episode_length` zero-action control steps.
pub fn calibrate_d0(
    cfg: &KsConfig,
    reference: &ReferenceState,
    seeds: &[u64],
    exec: Execution,
) -> Result<f64, SpectralError> {
    assert!(!seeds.is_empty(), "calibration needs at least one episode");
    let sums = par_map(exec, seeds, |&seed| -> Result<f64, SpectralError> {
        let mut sim = Simulation::new(cfg.clone())?;
        sim.initialize(seed);
        sim.advance(cfg.solver_steps_for(cfg.burn_in_time), None)?;
        let mut total = 0.0;
        for _ in 0..cfg.episode_length {
            sim.advance(cfg.substeps_per_control, None)?;
            let diff: Vec<f64> =
                sim.grid_values().iter().zip(reference.profile.grid_values()).map(|(u, r)| u - r).collect();
            total += grid_l2(&diff, cfg.dx());
        }
        Ok(total)
    });
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / (seeds.len() * cfg.episode_length) as f64)
}

/// The documented seed block `D0_SEED_BASE .. D0_SEED_BASE + episodes`.
pub fn calibration_seeds(episodes: usize) -> Vec<u64> {
    (0..episodes as u64).map(|i| D0_SEED_BASE + i).collect()
}

/// Reference with `d0_bar` filled in from the standard calibration block.
pub fn calibrated_reference(
    cfg: &KsConfig,
    mut reference: ReferenceState,
    exec: Execution,
) -> Result<ReferenceState, SpectralError> {
    let d0 = calibrate_d0(cfg, &reference, &calibration_seeds(D0_EPISODES), exec)?;
    reference.d0_bar = Some(d0);
    Ok(reference)
}
