//! Sparse transport plans and their validation.

use super::{TransportError, PLAN_TOL};

/// A coupling of two finite marginals, stored as sparse `(i, j, mass)`
/// entries. Entry order is deterministic for a given solve.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    source: Vec<f64>,
    target: Vec<f64>,
    entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    /// Builds and validates a plan. Entries must be nonnegative (a
    /// `-1e-15` floor absorbs sign noise from pivoting, clamped to 0),
    /// in-range, and must reproduce both marginals within `1e-10`.
    pub fn new(
        source: Vec<f64>,
        target: Vec<f64>,
        entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self, TransportError> {
        let plan = TransportPlan {
            source,
            target,
            entries,
        };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<(), TransportError> {
        let mut row = vec![0.0f64; self.source.len()];
        let mut col = vec![0.0f64; self.target.len()];
        for &(i, j, mass) in &self.entries {
            if i >= self.source.len() || j >= self.target.len() {
                return Err(TransportError::InvalidPlan(format!(
                    "entry ({i}, {j}) out of range"
                )));
            }
            if !(mass >= -1e-15) || !mass.is_finite() {
                return Err(TransportError::InvalidPlan(format!(
                    "entry ({i}, {j}) has mass {mass:e}"
                )));
            }
            row[i] += mass.max(0.0);
            col[j] += mass.max(0.0);
        }
        for (i, (&got, &want)) in row.iter().zip(&self.source).enumerate() {
            if (got - want).abs() > PLAN_TOL {
                return Err(TransportError::InvalidPlan(format!(
                    "row {i} sums to {got}, marginal is {want}"
                )));
            }
        }
        for (j, (&got, &want)) in col.iter().zip(&self.target).enumerate() {
            if (got - want).abs() > PLAN_TOL {
                return Err(TransportError::InvalidPlan(format!(
                    "column {j} sums to {got}, marginal is {want}"
                )));
            }
        }
        Ok(())
    }

    pub fn source_marginal(&self) -> &[f64] {
        &self.source
    }

    pub fn target_marginal(&self) -> &[f64] {
        &self.target
    }

    /// Sparse `(i, j, mass)` entries; masses may include exact zeros
    /// (degenerate basic cells).
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Re-evaluates the plan's cost against an arbitrary cost function.
    pub fn cost_against<F: Fn(usize, usize) -> f64>(&self, cost: F) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, mass)| mass.max(0.0) * cost(i, j))
            .sum()
    }

    /// Conditional rows: `rows[i]` lists `(j, mass / source[i])`.
    /// Rows with zero source mass are empty. Used to sample `Y | X = i`
    /// when coupling two chains through an optimal plan.
    pub fn conditional_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.source.len()];
        for &(i, j, mass) in &self.entries {
            if mass > 0.0 && self.source[i] > 0.0 {
                rows[i].push((j, mass / self.source[i]));
            }
        }
        rows
    }
}
