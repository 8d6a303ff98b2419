//! The monotone (quantile) coupling on a line.
//!
//! For marginals on a common ordered axis, pairing mass in increasing
//! order is the optimal coupling for any convex cost, in particular for
//! squared distance. This is the cheap route for single-site updates;
//! the LP solver reproduces it (a cross-check the tests pin down).

use super::{TransportError, TransportPlan};

/// Squared-distance cost of the monotone coupling between `(xs, ps)`
/// and `(ys, qs)`. Supports must be strictly increasing; weights must
/// be nonnegative and sum to 1 within `1e-10` each.
///
/// Returns the cost and the (validated) plan.
pub fn w2_sq_monotone_1d(
    xs: &[f64],
    ps: &[f64],
    ys: &[f64],
    qs: &[f64],
) -> Result<(f64, TransportPlan), TransportError> {
    check_1d(xs, ps, "source")?;
    check_1d(ys, qs, "target")?;
    let su: f64 = ps.iter().sum();
    let sv: f64 = qs.iter().sum();
    if (su - sv).abs() > 1e-10 {
        return Err(TransportError::Unbalanced { diff: (su - sv).abs() });
    }

    let mut entries = Vec::new();
    let mut cost = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    // Remaining mass at the current atoms.
    let mut remain_p = ps.first().copied().unwrap_or(0.0);
    let mut remain_q = qs.first().copied().unwrap_or(0.0);
    while i < xs.len() && j < ys.len() {
        if remain_p <= 0.0 {
            i += 1;
            if i < xs.len() {
                remain_p = ps[i];
            }
            continue;
        }
        if remain_q <= 0.0 {
            j += 1;
            if j < ys.len() {
                remain_q = qs[j];
            }
            continue;
        }
        let moved = remain_p.min(remain_q);
        cost += moved * (xs[i] - ys[j]).powi(2);
        entries.push((i, j, moved));
        remain_p -= moved;
        remain_q -= moved;
    }
    let plan = TransportPlan::new(ps.to_vec(), qs.to_vec(), entries)?;
    Ok((cost, plan))
}

fn check_1d(xs: &[f64], ws: &[f64], what: &str) -> Result<(), TransportError> {
    if xs.len() != ws.len() || xs.is_empty() {
        return Err(TransportError::BadMarginal(format!(
            "{what}: support and weights must be nonempty and equal length"
        )));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) || xs.iter().any(|v| !v.is_finite()) {
        return Err(TransportError::BadMarginal(format!(
            "{what}: support must be strictly increasing and finite"
        )));
    }
    if ws.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(TransportError::BadMarginal(format!(
            "{what}: weights must be nonnegative"
        )));
    }
    Ok(())
}
