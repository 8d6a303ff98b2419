//! # gibbslab
//!
//! A numerical laboratory for measure concentration via Gibbs-sampler
//! couplings. The crate builds exactly computable models (nondegenerate
//! Gaussians and finite grid measures), runs the patch-resampling Markov
//! kernels and their optimal couplings on them, certifies transport and
//! contractivity constants, and checks the resulting family of
//! distance-divergence and contraction inequalities trial by trial.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! model ──► transport / divergence ──► gibbs ──► certify ──► verify
//! ```
//!
//! - [`model`] — measures, potentials, patch families, conditional laws,
//!   and the JSON configuration format.
//! - [`transport`] — 2-Wasserstein distances and optimal couplings:
//!   Gaussian closed form, 1D monotone coupling, exact transportation LP.
//! - [`divergence`] — Kullback–Leibler divergence in closed form and on
//!   grids, plus the chain-decomposition identity for the sampler.
//! - [`gibbs`] — the patch kernels, the interpolation chain with optimal
//!   per-step couplings, and the two-chain coupled simulation.
//! - [`certify`] — transport/log-Sobolev constants, influence matrices,
//!   operator norms, and contractivity certificates.
//! - [`verify`] — inequality suites that turn each certified model into
//!   pass/fail reports with explicit margins.
//!
//! Everything is deterministic given a master seed; all randomness flows
//! through [`rng`].

#![forbid(unsafe_code)]

pub mod certify;
pub mod divergence;
pub mod gibbs;
pub mod model;
pub mod rng;
pub mod transport;
pub mod verify;
