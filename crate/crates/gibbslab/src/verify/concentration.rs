//! Two-set concentration: the Euclidean gap between grid subsets
//! against the root-log-mass bound.
//!
//! The route goes through restrictions: renormalizing the model onto a
//! subset costs exactly `log(1/mass)` in divergence, so the
//! distance–divergence constant turns into a two-set bound
//! `d(A, B) <= c * (sqrt(log 1/q(A)) + sqrt(log 1/q(B)))` via the
//! triangle inequality on transports of the two restrictions.

use crate::model::{GridMeasure, Model};

use super::constants::constant_c;
use super::{InequalityId, RunContext, VerificationReport, VerifyError};

/// Euclidean distance between two grid subsets: the minimum of
/// `|x_a - x_b|` (not squared) over embedded state pairs. States are
/// joint indices into the model grid.
pub fn set_distance(q: &GridMeasure, a: &[usize], b: &[usize]) -> Result<f64, VerifyError> {
    if a.is_empty() || b.is_empty() {
        return Err(VerifyError::EmptySet);
    }
    let states = q.state_count();
    if a.iter().chain(b).any(|&s| s >= states) {
        return Err(VerifyError::Unsupported("set state outside the model grid"));
    }
    let b_points: Vec<_> = b.iter().map(|&s| q.point(s)).collect();
    let mut best = f64::INFINITY;
    for &sa in a {
        let pa = q.point(sa);
        for pb in &b_points {
            best = best.min((&pa - pb).norm());
        }
    }
    Ok(best)
}

/// The two-set constant from the distance–divergence pipeline:
/// `C * sqrt((v/t) * (1/delta) * (2/rho))` with `C` from
/// [`constant_c`]. Coverage bounds come from the patch family, `delta`
/// from a contractivity certificate, `rho` from a transport
/// certificate.
pub fn concentration_constant(v: u32, t: u32, delta: f64, rho: f64) -> Result<f64, VerifyError> {
    if !(delta > 0.0) {
        return Err(VerifyError::NotContractive(delta));
    }
    if t == 0 || v < t {
        return Err(VerifyError::Unsupported(
            "coverage bounds need 1 <= t <= v",
        ));
    }
    if !(rho > 0.0) {
        return Err(VerifyError::Unsupported(
            "transport certificate must carry a positive constant",
        ));
    }
    Ok(constant_c() * ((f64::from(v) / f64::from(t)) * (1.0 / delta) * (2.0 / rho)).sqrt())
}

/// Two-set concentration on a discrete model: for each pair `(A, B)`,
/// `lhs = d(A, B)` and `rhs = c * (sqrt(log 1/q(A)) + sqrt(log 1/q(B)))`.
///
/// A zero-mass set makes the bound vacuous; the report then passes with
/// its `vacuous` flag set. `rigorous` should say whether every
/// certificate feeding `c` was itself rigorous — the constant arrives
/// here as a bare number, so the caller owns that call.
pub fn verify_concentration(
    model: &Model,
    pairs: &[(Vec<usize>, Vec<usize>)],
    c: f64,
    rigorous: bool,
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, VerifyError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(VerifyError::Unsupported("two-set constant must be positive"));
    }
    let q = &model.as_grid()?.measure;
    let tolerance = ctx.tolerances.exact(InequalityId::Concentration);
    let mut reports = Vec::with_capacity(pairs.len());
    for (i, (a, b)) in pairs.iter().enumerate() {
        let lhs = set_distance(q, a, b)?;
        let root_log_inv_mass = |set: &[usize]| {
            let mass: f64 = set.iter().map(|&s| q.prob(s)).sum();
            // Guard the floating sum against landing a hair above 1.
            (1.0 / mass).ln().max(0.0).sqrt()
        };
        let rhs = c * (root_log_inv_mass(a) + root_log_inv_mass(b));
        reports.push(VerificationReport::build(
            InequalityId::Concentration,
            lhs,
            rhs,
            tolerance,
            ctx.meta(i as u64),
            vec![format!("c = {c}"), format!("|A|={}, |B|={}", a.len(), b.len())],
            rigorous,
        ));
    }
    Ok(reports)
}
