//! Site-redraw (heat-bath) kernels, interpolation chains, and coupled
//! simulation.
//!
//! The single-patch kernel `G_I` resamples the coordinates in patch
//! `I` from the model's conditional law given the complement, leaving
//! the complement untouched. The full sweep kernel `G` picks a patch
//! uniformly from the family (with multiplicity) and applies `G_I`;
//! the stationary measure of every `G_I`, and hence of `G` and `G^M`,
//! is the model measure itself.
//!
//! The interpolation chain runs a *fixed* patch sequence
//! `I_1, ..., I_M` from an arbitrary start `p`, producing the bridge
//! `r(0) = p, r(l) = r(l-1) G_{I_l}`, together with the step-optimal
//! couplings this crate's inequalities are stated through: at each
//! step the complement is carried over unchanged and the two
//! conditional laws on the patch are coupled optimally given the
//! boundary. Everything about this bridge is computed exactly (closed
//! forms for Gaussians, tensors plus transport LPs for grids); Monte
//! Carlo enters only in the separate coupled-trajectory simulator.

mod chain;
mod coupled;
mod kernel;

pub use chain::{interpolation_chain, ChainStep, ChainTrace};
pub use coupled::{simulate_coupled_chain, CoupledChainStats};
pub use kernel::{
    apply_gamma_grid, apply_gamma_patch, apply_gamma_patch_gaussian, apply_gamma_patch_grid,
    apply_gamma_power_grid, GridKernel,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GibbsError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Transport(#[from] crate::transport::TransportError),
    #[error(transparent)]
    Divergence(#[from] crate::divergence::DivergenceError),
    #[error("kernel is undefined here: {0}")]
    Indeterminate(String),
    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),
}
