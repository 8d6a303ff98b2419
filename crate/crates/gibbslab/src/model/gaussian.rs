//! Gaussian measures and their construction from quadratic potentials.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{ModelError, QuadraticPotential, SYMMETRY_TOL};

/// A Gaussian law `N(mean, cov)`.
///
/// The primary constructor requires a strictly positive definite
/// covariance; [`GaussianMeasure::degenerate`] admits rank-deficient
/// covariances for laws concentrated on affine subspaces (these show up
/// as the infinite-divergence edge cases and in closed-form transport,
/// which only needs positive semidefiniteness).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn check_symmetric(cov: &DMatrix<f64>) -> Result<(), ModelError> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(ModelError::DimensionMismatch {
            what: "covariance",
            expected: n,
            got: cov.ncols(),
        });
    }
    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for k in (i + 1)..n {
            if (cov[(i, k)] - cov[(k, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(ModelError::AsymmetricJ {
                    i,
                    k,
                    diff: (cov[(i, k)] - cov[(k, i)]).abs(),
                });
            }
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Config("non-finite covariance entry".into()));
    }
    Ok(())
}

impl GaussianMeasure {
    /// Nondegenerate Gaussian; rejects covariances that are asymmetric
    /// or not positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, ModelError> {
        check_symmetric(&cov)?;
        if mean.len() != cov.nrows() {
            return Err(ModelError::DimensionMismatch {
                what: "mean",
                expected: cov.nrows(),
                got: mean.len(),
            });
        }
        if Cholesky::new(cov.clone()).is_none() {
            return Err(ModelError::NotPositiveDefinite);
        }
        Ok(GaussianMeasure { mean, cov })
    }

    /// Possibly rank-deficient Gaussian: covariance must be symmetric
    /// and positive semidefinite (eigenvalues above `-1e-10 * scale`).
    pub fn degenerate(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, ModelError> {
        check_symmetric(&cov)?;
        if mean.len() != cov.nrows() {
            return Err(ModelError::DimensionMismatch {
                what: "mean",
                expected: cov.nrows(),
                got: mean.len(),
            });
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let eigs = cov.clone().symmetric_eigen().eigenvalues;
        if eigs.iter().any(|&l| l < -1e-10 * scale) {
            return Err(ModelError::NotPositiveDefinite);
        }
        Ok(GaussianMeasure { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `E |X|^2 = |mean|^2 + tr cov`.
    pub fn second_moment(&self) -> f64 {
        self.mean.norm_squared() + self.cov.trace()
    }

    /// Standard isotropic Gaussian `N(0, I_n)`.
    pub fn standard(n: usize) -> Self {
        GaussianMeasure {
            mean: DVector::zeros(n),
            cov: DMatrix::identity(n, n),
        }
    }
}

/// The Gaussian induced by a quadratic potential with `K = 0`:
/// `exp(-Phi)` normalizes to `N(J^{-1} h, J^{-1})`.
///
/// Rejects potentials with a perturbation (those have no Gaussian law)
/// and non-positive-definite `J`.
pub fn gaussian_from_potential(
    potential: &QuadraticPotential,
) -> Result<GaussianMeasure, ModelError> {
    if potential.has_perturbation() {
        return Err(ModelError::PerturbationInGaussianMode);
    }
    let chol = Cholesky::new(potential.j().clone()).ok_or(ModelError::NotPositiveDefinite)?;
    let mean = chol.solve(potential.h());
    let cov = chol.inverse();
    // Symmetrize: the Cholesky inverse is exact-symmetric only in exact
    // arithmetic, and downstream symmetry checks run at 1e-12. (The
    // asymmetry here is at machine-epsilon level.)
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianMeasure::new(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_quadratic_potential;
    use approx::assert_relative_eq;

    #[test]
    fn potential_to_gaussian_matches_hand_inverse() {
        // J = [[2,1],[1,2]] => J^{-1} = (1/3)[[2,-1],[-1,2]];
        // h = (1,0) => mean = (2/3, -1/3).
        let p = build_quadratic_potential(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            DVector::from_row_slice(&[1.0, 0.0]),
            None,
            None,
        )
        .unwrap();
        let g = gaussian_from_potential(&p).unwrap();
        assert_relative_eq!(g.mean()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(g.mean()[1], -1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(g.cov()[(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(g.cov()[(0, 1)], -1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(g.cov()[(1, 1)], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_j_is_rejected() {
        let p = build_quadratic_potential(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DVector::zeros(2),
            None,
            None,
        )
        .unwrap();
        assert!(matches!(
            gaussian_from_potential(&p).unwrap_err(),
            ModelError::NotPositiveDefinite
        ));
    }

    #[test]
    fn degenerate_accepts_rank_deficient_psd() {
        // Rank-1 covariance [[1,1],[1,1]].
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(GaussianMeasure::new(DVector::zeros(2), cov.clone()).is_err());
        assert!(GaussianMeasure::degenerate(DVector::zeros(2), cov).is_ok());
    }

    #[test]
    fn degenerate_still_rejects_indefinite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianMeasure::degenerate(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn second_moment_sums_mean_and_trace() {
        let g = GaussianMeasure::new(
            DVector::from_row_slice(&[3.0, 4.0]),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[0.5, 1.5])),
        )
        .unwrap();
        assert_relative_eq!(g.second_moment(), 25.0 + 2.0, epsilon = 1e-14);
    }
}
