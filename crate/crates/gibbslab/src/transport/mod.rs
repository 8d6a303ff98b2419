//! Couplings and squared 2-Wasserstein distances.
//!
//! Three computation routes, used as cross-checks on one another:
//!
//! * closed forms for Gaussian pairs (including the optimal affine
//!   transport map),
//! * the monotone (quantile) coupling for measures on a common line,
//!   optimal for convex costs,
//! * an exact transportation-simplex LP for arbitrary finite supports.
//!
//! All distances are **squared**: `w2_sq_*` returns `W_2^2`, the
//! quantity every transportation-cost inequality in this crate is
//! stated in. Plans are validated against their marginals on every
//! solve — an invalid plan is a bug, not a rounding artifact, so
//! validation failures are hard errors.

mod gaussian;
mod monotone;
mod plan;
mod simplex;

pub use gaussian::{optimal_gaussian_map, w2_sq_gaussian, GaussianMap};
pub use monotone::w2_sq_monotone_1d;
pub use plan::TransportPlan;
pub use simplex::{w2_sq_exact, ExactSolution};

use crate::model::GridMeasure;
use thiserror::Error;

/// Marginal-sum agreement required of a valid plan.
pub const PLAN_TOL: f64 = 1e-10;
/// Reduced-cost tolerance for simplex optimality, relative to the
/// largest cost entry.
pub const PIVOT_TOL: f64 = 1e-12;
/// Largest cost matrix (cells) the exact solver will form.
pub const MAX_PLAN_CELLS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("marginals are unbalanced: |sum(p) - sum(q)| = {diff:e}")]
    Unbalanced { diff: f64 },
    #[error("bad marginal: {0}")]
    BadMarginal(String),
    #[error("problem size {cells} cells exceeds the {MAX_PLAN_CELLS}-cell limit")]
    SizeLimit { cells: usize },
    #[error("simplex did not converge within {iters} pivots")]
    NonConvergence { iters: usize },
    #[error("transport plan failed validation: {0}")]
    InvalidPlan(String),
    #[error("covariance is not positive semidefinite (eigenvalue {eig:e})")]
    NotPsd { eig: f64 },
    #[error("source covariance is singular; the optimal map needs a nondegenerate source")]
    SingularSource,
    #[error("grid measures live on different supports")]
    SupportMismatch,
}

/// Exact squared 2-Wasserstein distance between two grid measures on
/// the same support, via the transportation LP on embedded points.
pub fn w2_sq_grid(p: &GridMeasure, q: &GridMeasure) -> Result<ExactSolution, TransportError> {
    if !p.same_support(q) {
        return Err(TransportError::SupportMismatch);
    }
    let points: Vec<nalgebra::DVector<f64>> = (0..p.state_count()).map(|s| p.point(s)).collect();
    w2_sq_exact(&points, p.probs(), &points, q.probs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridMeasure;
    use approx::assert_relative_eq;

    #[test]
    fn grid_route_agrees_with_monotone_on_a_line() {
        let p = GridMeasure::new(vec![vec![-1.0, 0.0, 2.0]], vec![0.2, 0.5, 0.3]).unwrap();
        let q = GridMeasure::new(vec![vec![-1.0, 0.0, 2.0]], vec![0.6, 0.1, 0.3]).unwrap();
        let lp = w2_sq_grid(&p, &q).unwrap();
        let (mono, _) =
            w2_sq_monotone_1d(&[-1.0, 0.0, 2.0], p.probs(), &[-1.0, 0.0, 2.0], q.probs())
                .unwrap();
        assert_relative_eq!(lp.cost, mono, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_supports_are_refused() {
        let p = GridMeasure::new(vec![vec![0.0, 1.0]], vec![0.5, 0.5]).unwrap();
        let q = GridMeasure::new(vec![vec![0.0, 2.0]], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            w2_sq_grid(&p, &q),
            Err(TransportError::SupportMismatch)
        ));
    }

    #[test]
    fn point_mass_to_uniform_pair_costs_two() {
        // delta at +1 vs uniform on {-1, +1}: half the mass moves
        // distance 2, so W2^2 = 0.5 * 4 = 2.
        let p = GridMeasure::new(vec![vec![-1.0, 1.0]], vec![0.0, 1.0]).unwrap();
        let q = GridMeasure::new(vec![vec![-1.0, 1.0]], vec![0.5, 0.5]).unwrap();
        let sol = w2_sq_grid(&p, &q).unwrap();
        assert_relative_eq!(sol.cost, 2.0, epsilon = 1e-12);
    }
}
