//! Closed-form transport between Gaussian laws.
//!
//! For `p = N(m1, S1)` and `q = N(m2, S2)`,
//!
//! ```text
//! W2^2(p, q) = |m1 - m2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2})
//! ```
//!
//! and, when `S1` is nondegenerate, the optimal coupling is the affine
//! map `T(x) = A x + b` with
//!
//! ```text
//! A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2},    b = m2 - A m1.
//! ```
//!
//! Matrix square roots go through symmetric eigendecompositions with
//! eigenvalues floored at zero (tolerating `-1e-10`-scale negatives
//! from finite arithmetic; genuinely indefinite inputs error).

use nalgebra::{DMatrix, DVector};

use super::TransportError;
use crate::model::GaussianMeasure;

/// Symmetric PSD square root; errors when an eigenvalue is negative
/// beyond rounding tolerance.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, TransportError> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let eig = m.clone().symmetric_eigen();
    for &l in eig.eigenvalues.iter() {
        if l < -1e-10 * scale {
            return Err(TransportError::NotPsd { eig: l });
        }
    }
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose())
}

/// Symmetric inverse square root; eigenvalues below `1e-14 * scale`
/// count as zero rank and make the matrix singular.
fn pd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, TransportError> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let eig = m.clone().symmetric_eigen();
    for &l in eig.eigenvalues.iter() {
        if l < -1e-10 * scale {
            return Err(TransportError::NotPsd { eig: l });
        }
        if l < 1e-14 * scale {
            return Err(TransportError::SingularSource);
        }
    }
    let inv_sqrt_vals = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&inv_sqrt_vals) * q.transpose())
}

/// Squared 2-Wasserstein distance between Gaussians (closed form).
/// Works for degenerate covariances.
pub fn w2_sq_gaussian(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64, TransportError> {
    assert_eq!(p.dim(), q.dim(), "dimension mismatch");
    let mean_part = (p.mean() - q.mean()).norm_squared();
    let s2h = psd_sqrt(q.cov())?;
    let inner = &s2h * p.cov() * &s2h;
    let cross = psd_sqrt(&inner)?;
    let trace_part = p.cov().trace() + q.cov().trace() - 2.0 * cross.trace();
    // The trace part is a squared Bures distance; tiny negatives are
    // rounding noise.
    Ok(mean_part + trace_part.max(0.0))
}

/// The optimal affine transport map from `p` to `q`.
#[derive(Debug, Clone)]
pub struct GaussianMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl GaussianMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }

    /// Pushforward of a Gaussian through the map:
    /// `N(m, S) -> N(A m + b, A S A')`.
    pub fn pushforward(&self, p: &GaussianMeasure) -> Result<GaussianMeasure, TransportError> {
        let mean = self.apply(p.mean());
        let cov = &self.a * p.cov() * self.a.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        GaussianMeasure::degenerate(mean, cov)
            .map_err(|_| TransportError::NotPsd { eig: f64::NAN })
    }

    /// `E |X - T(X)|^2` under `X ~ p`: the transport cost of the map.
    pub fn cost_under(&self, p: &GaussianMeasure) -> f64 {
        let n = p.dim();
        let residual = DMatrix::identity(n, n) - &self.a;
        let mean = &residual * p.mean() - &self.b;
        let cov = &residual * p.cov() * residual.transpose();
        mean.norm_squared() + cov.trace()
    }
}

/// Computes the optimal map from `p` (nondegenerate) to `q`.
pub fn optimal_gaussian_map(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
) -> Result<GaussianMap, TransportError> {
    assert_eq!(p.dim(), q.dim(), "dimension mismatch");
    let s1h = psd_sqrt(p.cov())?;
    let s1ih = pd_inv_sqrt(p.cov())?;
    let middle = psd_sqrt(&(&s1h * q.cov() * &s1h))?;
    let a = &s1ih * middle * &s1ih;
    let a = (&a + a.transpose()) * 0.5;
    let b = q.mean() - &a * p.mean();
    Ok(GaussianMap { a, b })
}
