//! Relative entropy (Kullback–Leibler divergence) on both model types.
//!
//! `D(p || q)` is returned in nats. When `p` is not absolutely
//! continuous with respect to `q`, the divergence is `+inf`, returned
//! as `f64::INFINITY` — a meaningful value for callers, not an error:
//! the transportation-cost inequalities it feeds are vacuously true
//! there, and reports flag such trials instead of failing them.
//!
//! Gaussian closed form (nondegenerate `q = N(mq, Sq)`):
//!
//! ```text
//! D = (1/2) [ tr(Sq^{-1} Sp) + (mq - mp)' Sq^{-1} (mq - mp) - n + ln det Sq - ln det Sp ]
//! ```
//!
//! Degenerate covariances are handled by eigendecomposition of `Sq`:
//! mass of `p` outside the support of `q` (a range violation of either
//! the covariance or the mean offset) gives `+inf`; otherwise both
//! laws are projected onto the support and the closed form applies
//! there. Eigenvalues below `1e-14 * scale` count as zero rank.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{GaussianMeasure, GridMeasure};

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("measures live on different supports")]
    SupportMismatch,
    #[error("dimension mismatch: {p} vs {q}")]
    DimensionMismatch { p: usize, q: usize },
}

/// Rank cutoff, relative to the largest covariance entry.
const RANK_TOL: f64 = 1e-14;

/// KL divergence between Gaussians; `+inf` when `p` is not absolutely
/// continuous with respect to `q`. Identical inputs short-circuit to
/// exactly `0.0`.
pub fn kl_gaussian(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64, DivergenceError> {
    if p.dim() != q.dim() {
        return Err(DivergenceError::DimensionMismatch {
            p: p.dim(),
            q: q.dim(),
        });
    }
    if p.mean() == q.mean() && p.cov() == q.cov() {
        return Ok(0.0);
    }
    let n = p.dim();
    let scale = q.cov().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let eig = q.cov().clone().symmetric_eigen();

    // Split eigenvectors of Sq into support (positive eigenvalue) and
    // null directions.
    let mut support: Vec<usize> = Vec::new();
    let mut null: Vec<usize> = Vec::new();
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        if l > RANK_TOL * scale {
            support.push(idx);
        } else {
            null.push(idx);
        }
    }

    let dmean = p.mean() - q.mean();
    if !null.is_empty() {
        // p must put no mass (and no mean offset) along null directions.
        for &idx in &null {
            let dir = eig.eigenvectors.column(idx);
            let var_p = (p.cov() * dir).dot(&dir);
            let off = dmean.dot(&dir);
            let p_scale = p.cov().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            if var_p > RANK_TOL * p_scale * 10.0 || off.abs() > 1e-9 {
                return Ok(f64::INFINITY);
            }
        }
    }

    if support.is_empty() {
        // Both measures are the same point mass (offsets checked above).
        return Ok(0.0);
    }

    // Project both laws onto the support of q.
    let k = support.len();
    let basis = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, support[c])]);
    let sq = DMatrix::from_fn(k, k, |r, c| {
        if r == c {
            eig.eigenvalues[support[r]]
        } else {
            0.0
        }
    });
    let sp = basis.transpose() * p.cov() * &basis;
    let dm = basis.transpose() * dmean;

    // ln det Sp via eigenvalues; a zero eigenvalue means p is singular
    // inside the support of q, hence not absolutely continuous.
    let sp_eig = sp.clone().symmetric_eigen().eigenvalues;
    let sp_scale = sp.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if sp_eig.iter().any(|&l| l < RANK_TOL * sp_scale) {
        return Ok(f64::INFINITY);
    }
    let ln_det_p: f64 = sp_eig.iter().map(|l| l.ln()).sum();
    let ln_det_q: f64 = support.iter().map(|&i| eig.eigenvalues[i].ln()).sum();

    let sq_inv = DMatrix::from_fn(k, k, |r, c| {
        if r == c {
            1.0 / sq[(r, r)]
        } else {
            0.0
        }
    });
    let trace_term = (&sq_inv * &sp).trace();
    let quad_term = (&sq_inv * &dm).dot(&dm);
    let kl = 0.5 * (trace_term + quad_term - k as f64 + ln_det_q - ln_det_p);
    // Rounding can leave a tiny negative near p = q.
    Ok(kl.max(0.0))
}

/// KL divergence between grid measures on a common support; `+inf`
/// when `p` charges a state that `q` does not.
pub fn kl_grid(p: &GridMeasure, q: &GridMeasure) -> Result<f64, DivergenceError> {
    if !p.same_support(q) {
        return Err(DivergenceError::SupportMismatch);
    }
    let mut sum = 0.0;
    for (pp, qq) in p.probs().iter().zip(q.probs()) {
        if *pp > 0.0 {
            if *qq <= 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += pp * (pp / qq).ln();
        }
        // p = 0 contributes 0 regardless of q.
    }
    Ok(sum.max(0.0))
}
