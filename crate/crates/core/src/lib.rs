//! Multifidelity reinforcement learning on a chaotic Kuramoto-Sivashinsky
//! control problem.

pub mod analysis;
pub mod env;
pub mod harness;
pub mod nn;
pub mod par;
pub mod pnn;
pub mod rng;
pub mod sac;
pub mod spectral;
pub mod transfer;
