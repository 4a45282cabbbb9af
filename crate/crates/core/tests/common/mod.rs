#![allow(dead_code)]

use std::f64::consts::PI;

use rustfft::num_complex::Complex64 as C;

/// Exponential time-differencing RK4 (Kassam & Trefethen 2005) on the
/// dealiased KS semi-discretization. Written against a naive O(N^2) DFT so
/// that it shares no code with the library solver.
pub struct Etdrk4 {
    n: usize,
    cutoff: usize,
    q: Vec<f64>,
    e: Vec<f64>,
    e2: Vec<f64>,
    qf: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl Etdrk4 {
    pub fn new(n: usize, length: f64, lambda: f64, h: f64) -> Self {
        let cutoff = (n - 1) / 3;
        let q: Vec<f64> = (0..=n / 2).map(|k| 2.0 * PI * k as f64 / length).collect();
        let lin: Vec<f64> = q.iter().map(|&q| q * q - lambda * q.powi(4)).collect();
        let m = 64;
        let roots: Vec<C> = (1..=m).map(|j| C::from_polar(1.0, PI * (j as f64 - 0.5) / m as f64)).collect();
        let mean = |f: &dyn Fn(C) -> C, l: f64| -> f64 {
            roots.iter().map(|&r| f(C::new(h * l, 0.0) + r).re).sum::<f64>() / m as f64
        };
        let mut s = Self {
            n,
            cutoff,
            q: q.clone(),
            e: vec![0.0; q.len()],
            e2: vec![0.0; q.len()],
            qf: vec![0.0; q.len()],
            f1: vec![0.0; q.len()],
            f2: vec![0.0; q.len()],
            f3: vec![0.0; q.len()],
        };
        for (k, &l) in lin.iter().enumerate() {
            s.e[k] = (h * l).exp();
            s.e2[k] = (h * l / 2.0).exp();
            s.qf[k] = h * mean(&|z: C| ((z / 2.0).exp() - 1.0) / z, l);
            s.f1[k] = h * mean(&|z: C| (-4.0 - z + z.exp() * (4.0 - 3.0 * z + z * z)) / z.powi(3), l);
            s.f2[k] = h * mean(&|z: C| (2.0 + z + z.exp() * (z - 2.0)) / z.powi(3), l);
            s.f3[k] = h * mean(&|z: C| (-4.0 - 3.0 * z - z * z + z.exp() * (4.0 - z)) / z.powi(3), l);
        }
        s
    }

    /// `-(i q / 2) DFT(u^2)` with both input and product limited to |k| <= cutoff.
    pub fn nonlinear(&self, c: &[C]) -> Vec<C> {
        let n = self.n;
        let u: Vec<f64> = (0..n)
            .map(|j| {
                let mut v = c[0].re;
                for k in 1..=self.cutoff {
                    let ph = 2.0 * PI * (k * j) as f64 / n as f64;
                    v += 2.0 * (c[k] * C::from_polar(1.0, ph)).re;
                }
                v
            })
            .collect();
        let mut out = vec![C::default(); n / 2 + 1];
        for (k, o) in out.iter_mut().enumerate().take(self.cutoff + 1) {
            let mut acc = C::default();
            for (j, &uj) in u.iter().enumerate() {
                acc += uj * uj * C::from_polar(1.0, -2.0 * PI * (k * j) as f64 / n as f64);
            }
            *o = C::new(0.0, -self.q[k] / 2.0) * acc / n as f64;
        }
        out
    }

    pub fn step(&self, v: &[C]) -> Vec<C> {
        let nv = self.nonlinear(v);
        let a: Vec<C> = (0..v.len()).map(|k| self.e2[k] * v[k] + self.qf[k] * nv[k]).collect();
        let na = self.nonlinear(&a);
        let b: Vec<C> = (0..v.len()).map(|k| self.e2[k] * v[k] + self.qf[k] * na[k]).collect();
        let nb = self.nonlinear(&b);
        let cc: Vec<C> = (0..v.len()).map(|k| self.e2[k] * a[k] + self.qf[k] * (2.0 * nb[k] - nv[k])).collect();
        let nc = self.nonlinear(&cc);
        (0..v.len())
            .map(|k| {
                if k > self.cutoff {
                    C::default()
                } else {
                    self.e[k] * v[k] + nv[k] * self.f1[k] + 2.0 * (na[k] + nb[k]) * self.f2[k] + nc[k] * self.f3[k]
                }
            })
            .collect()
    }
}

/// Advances `v` by `dt` using `substeps` ETDRK4 steps.
pub fn etdrk4_reference(v: &[C], n: usize, length: f64, lambda: f64, dt: f64, substeps: usize) -> Vec<C> {
    let s = Etdrk4::new(n, length, lambda, dt / substeps as f64);
    let mut out = v.to_vec();
    for _ in 0..substeps {
        out = s.step(&out);
    }
    out
}

pub fn coeff_distance(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn coeff_norm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

use mfrl::env::{EnvError, Environment, Step};
use mfrl::nn::{Gradients, Mlp, ParamStore};
use mfrl::pnn::ProgressiveActor;
use mfrl::rng::seeded;
use mfrl::sac::{Agent, SacConfig};
use mfrl::spectral::{KsConfig, KsSolver, Simulation, SpectralField};
use mfrl::transfer::{build_agent, PnnVariant, TransferPlan};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

/// Cheap deterministic environment: the reward is highest when the action
/// matches a fixed target, and the observation drifts with the action.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    pub len: usize,
    pub target: Vec<f64>,
    state: Vec<f64>,
    t: usize,
}

impl ToyEnv {
    pub fn new(len: usize) -> Self {
        Self { len, target: vec![0.3, -0.2, 0.1, -0.4], state: vec![0.0; 8], t: 0 }
    }
}

impl Environment for ToyEnv {
    fn observation_dim(&self) -> usize {
        8
    }
    fn action_dim(&self) -> usize {
        4
    }
    fn action_bound(&self) -> f64 {
        0.5
    }
    fn episode_length(&self) -> usize {
        self.len
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        self.state = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        self.t = 0;
        Ok(self.state.clone())
    }
    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError> {
        let err: f64 = action.iter().zip(&self.target).map(|(a, t)| (a - t).powi(2)).sum();
        for (i, s) in self.state.iter_mut().enumerate() {
            *s = 0.9 * *s + 0.1 * action[i % 4];
        }
        self.t += 1;
        Ok(Step { observation: self.state.clone(), reward: 1.0 - err, done: self.t >= self.len })
    }
}

/// Norm-wise relative error between reverse-mode gradients and central
/// differences over every trainable scalar (or a strided subset of at most
/// `max_per_entry` per entry).
pub fn gradient_check(
    store: &ParamStore,
    grads: &Gradients,
    loss: &dyn Fn(&ParamStore) -> f64,
    h: f64,
    max_per_entry: usize,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (name, e) in store.iter() {
        if !e.trainable {
            assert!(!grads.contains(name), "frozen {name} received a gradient");
            continue;
        }
        let g = grads.get(name).unwrap_or_else(|| panic!("no gradient for {name}"));
        let n = e.numel();
        let stride = (n / max_per_entry.max(1)).max(1);
        for idx in (0..n).step_by(stride) {
            let mut plus = store.clone();
            plus.get_mut(name).unwrap().values[idx] += h;
            let mut minus = store.clone();
            minus.get_mut(name).unwrap().values[idx] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = g.as_slice().expect("contiguous")[idx];
            num += (an - fd).powi(2);
            den += fd.powi(2);
        }
    }
    (num / den.max(1e-300)).sqrt()
}

/// Literal per-sample transcription of the progressive-network layer rule,
/// reading parameters by name:
/// h_i^(k) = f(W_i^(k) h_{i-1}^(k) + b_i^(k) + sum_{j<k} U tanh(V alpha h_{i-1}^(j))).
pub fn naive_pnn(store: &ParamStore, columns: usize, depth: usize, x: &[f64]) -> Vec<f64> {
    let mat = |name: &str| -> (Vec<f64>, usize, usize) {
        let e = store.get(name).unwrap();
        let (r, c) = if e.shape.len() == 2 { (e.shape[0], e.shape[1]) } else { (e.shape[0], 1) };
        (e.values.clone(), r, c)
    };
    let matvec = |m: &(Vec<f64>, usize, usize), v: &[f64]| -> Vec<f64> {
        (0..m.1).map(|r| (0..m.2).map(|c| m.0[r * m.2 + c] * v[c]).sum()).collect()
    };
    let prefix = |k: usize, i: usize, j: usize| {
        if k == 2 {
            format!("adapt.l{i}.c{j}")
        } else {
            format!("adapt.k{k}.l{i}.c{j}")
        }
    };
    let mut h: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut out = Vec::new();
    for k in 1..=columns {
        let last = if k == columns { depth } else { depth - 1 };
        let mut hk: Vec<Vec<f64>> = vec![x.to_vec()];
        for i in 1..=last {
            let w = mat(&format!("col{k}.W{i}"));
            let b = mat(&format!("col{k}.b{i}"));
            let mut z = matvec(&w, &hk[i - 1]);
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += b.0[r];
            }
            if i >= 2 {
                for j in 1..k {
                    let p = prefix(k, i, j);
                    if store.get(&format!("{p}.V")).is_err() {
                        continue;
                    }
                    let alpha = store.get(&format!("{p}.alpha")).unwrap().values[0];
                    let scaled: Vec<f64> = h[j - 1][i - 1].iter().map(|v| alpha * v).collect();
                    let a: Vec<f64> = matvec(&mat(&format!("{p}.V")), &scaled).into_iter().map(f64::tanh).collect();
                    let lateral = matvec(&mat(&format!("{p}.U")), &a);
                    for (zr, l) in z.iter_mut().zip(lateral) {
                        *zr += l;
                    }
                }
            }
            let act = if i == depth { z } else { z.into_iter().map(f64::tanh).collect() };
            hk.push(act);
        }
        if k == columns {
            out = hk[depth].clone();
        }
        h.push(hk);
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// in decreasing order.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].powi(2))
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Two-column progressive agent on `ToyEnv` dimensions whose new column's
/// head is sensitive to its hidden layers and biased towards the reward
/// target, so the clean return is high.
pub fn toy_pnn(seed: u64) -> Agent {
    let cfg = SacConfig { actor_hidden: vec![16; 3], critic_hidden: vec![8], ..SacConfig::default() };
    let src = Agent::new(cfg.clone(), 8, 4, 0.5, seed).unwrap();
    let mut agent =
        build_agent(&TransferPlan::progressive(PnnVariant::Standard), Some(&src), &cfg, (8, 4, 0.5), seed + 1).unwrap();
    agent.actor.get_mut("col2.W4").unwrap().values.iter_mut().for_each(|w| *w *= 200.0);
    let head = agent.actor.get_mut("col2.b4").unwrap();
    head.values[..4].copy_from_slice(&[0.3f64, -0.2, 0.1, -0.4].map(|t| (t / 0.5).atanh()));
    agent
}

/// Coefficients of an uncontrolled run after the configured burn-in.
pub fn saturated(n: usize, lambda: f64, seed: u64) -> (KsConfig, Vec<C>) {
    let cfg = KsConfig { n, lambda, ..KsConfig::default() };
    let mut sim = Simulation::new(cfg.clone()).unwrap();
    sim.initialize(seed);
    sim.advance(cfg.solver_steps_for(cfg.burn_in_time), None).unwrap();
    (cfg, sim.coeffs().to_vec())
}

/// Relative L2 distance after one solver step between the library
/// integrator and the exponential oracle.
pub fn one_step_error(cfg: &KsConfig, v: &[C], dt: f64) -> f64 {
    let mut solver = KsSolver::new(KsConfig { dt_solution: dt, ..cfg.clone() }).unwrap();
    let mut ours = v.to_vec();
    solver.step_coeffs(&mut ours, None).unwrap();
    let oracle = etdrk4_reference(v, cfg.n, cfg.length, cfg.lambda, dt, 32);
    coeff_distance(&ours, &oracle) / coeff_norm(&oracle)
}

/// First whole time unit at which two runs started 1e-8 apart (per grid
/// point) differ by `threshold` in RMS.
pub fn separation_crossing(n: usize, threshold: f64, seed: u64) -> Option<f64> {
    let cfg = KsConfig { n, ..KsConfig::default() };
    let mut a = Simulation::new(cfg.clone()).unwrap();
    a.initialize(seed);
    let mut rng = seeded(seed ^ 0xC4A0);
    let mut u: Vec<f64> = a.grid_values();
    for x in &mut u {
        let z: f64 = StandardNormal.sample(&mut rng);
        *x += 1e-8 * z;
    }
    let mut b = Simulation::new(cfg.clone()).unwrap();
    b.set_field(&SpectralField::from_grid(u, cfg.length));
    let per = cfg.solver_steps_for(1.0);
    for step in 1..=200 {
        a.advance(per, None).unwrap();
        b.advance(per, None).unwrap();
        let (ua, ub) = (a.grid_values(), b.grid_values());
        let rms = (ua.iter().zip(&ub).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt();
        if rms >= threshold {
            return Some(step as f64);
        }
    }
    None
}

/// Plain MLP with orthogonal init plus uniform jitter.
pub fn random_mlp(seed: u64, input: usize, hidden: &[usize], output: usize) -> (Mlp, ParamStore) {
    let net = Mlp::new("f", input, hidden, output);
    let mut store = ParamStore::new();
    let mut rng = seeded(seed);
    net.init_params(&mut store, 1.0, &mut rng).unwrap();
    for (_, e) in store.iter_mut() {
        for v in &mut e.values {
            *v += 0.1 * rng.random_range(-1.0..1.0);
        }
    }
    (net, store)
}

/// Progressive actor with `columns` columns on a 5-in/4-out task, every
/// parameter jittered so no term hides behind a small init.
pub fn random_pnn(columns: usize, seed: u64, widths: &[usize]) -> (ProgressiveActor, ParamStore) {
    let mut rng = seeded(seed);
    let src = Mlp::new("pi", 5, widths, 4);
    let mut s = ParamStore::new();
    src.init_params(&mut s, 0.3, &mut rng).unwrap();
    let (mut pnn, mut store) = ProgressiveActor::from_source(&src, &s).unwrap();
    for _ in 1..columns {
        pnn.add_column(&mut store, Some(6), 0.3, &mut rng).unwrap();
    }
    for (_, e) in store.iter_mut() {
        for v in &mut e.values {
            *v += 0.3 * rng.random_range(-1.0..1.0);
        }
    }
    (pnn, store)
}
