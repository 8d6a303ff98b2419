//! Quadratic site potentials with optional bounded perturbations.
//!
//! The canonical energy is
//!
//! ```text
//! Phi(x) = (1/2) x' J x - h' x + sum_i K_i(x_i)
//! ```
//!
//! with `J` symmetric. Boundary conditions enter through the linear
//! term: fixing exterior coordinates `omega_j` coupled to interior site
//! `i` with strength `b_{i,j}` shifts `h_i` by `-sum_j b_{i,j} omega_j`,
//! because the cross term `b_{i,j} x_i omega_j` in the energy is linear
//! in `x_i` once `omega_j` is frozen.
//!
//! The perturbations `K_i` are tabulated 1D functions (piecewise linear,
//! clamped outside their table range) with a declared sup-norm bound
//! that every tabulated value must respect.

use nalgebra::{DMatrix, DVector};

use super::{ModelError, SYMMETRY_TOL};

/// One exterior coupling: interior site `i` feels `b * omega(exterior)`.
#[derive(Debug, Clone)]
pub struct BoundaryField {
    /// `(interior site, exterior label, coupling strength b)` triples.
    pub couplings: Vec<(usize, i64, f64)>,
    /// Frozen exterior values, keyed by label.
    pub omega: std::collections::BTreeMap<i64, f64>,
}

/// A tabulated per-site perturbation, evaluated by linear interpolation
/// and clamped to the boundary values outside the table.
#[derive(Debug, Clone)]
pub struct SiteTable {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl SiteTable {
    pub fn new(site: usize, xs: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        let bad = xs.len() < 2
            || xs.len() != values.len()
            || xs.windows(2).any(|w| !(w[0] < w[1]))
            || xs.iter().chain(values.iter()).any(|v| !v.is_finite());
        if bad {
            return Err(ModelError::BadTable { site });
        }
        Ok(SiteTable { xs, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.values[0];
        }
        if x >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        // partition_point finds the first knot strictly above x.
        let hi = self.xs.partition_point(|&knot| knot <= x);
        let lo = hi - 1;
        let t = (x - self.xs[lo]) / (self.xs[hi] - self.xs[lo]);
        self.values[lo] + t * (self.values[hi] - self.values[lo])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The validated quadratic potential.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    j: DMatrix<f64>,
    h: DVector<f64>,
    /// Per-site tables (index = site); `None` entries have `K_i = 0`.
    k_tables: Vec<Option<SiteTable>>,
    /// Declared bound on `sup_i sup_x |K_i(x)|`; `0` when no K is present.
    k_sup: f64,
}

impl QuadraticPotential {
    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn has_perturbation(&self) -> bool {
        self.k_tables.iter().any(Option::is_some)
    }

    /// Declared sup-norm bound on the perturbations.
    pub fn k_sup(&self) -> f64 {
        self.k_sup
    }

    /// `K_i(x)`; zero for sites with no table.
    pub fn k_at(&self, site: usize, x: f64) -> f64 {
        match &self.k_tables[site] {
            Some(table) => table.eval(x),
            None => 0.0,
        }
    }

    /// Full energy `Phi(x)`.
    pub fn phi(&self, x: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension");
        let quad = 0.5 * (self.j.clone() * x).dot(x);
        let lin = self.h.dot(x);
        let pert: f64 = (0..self.dim()).map(|i| self.k_at(i, x[i])).sum();
        quad - lin + pert
    }
}

/// Builds and validates a potential.
///
/// * `j` must be square, finite, and symmetric to `1e-12` relative to
///   its largest entry.
/// * `external` is the bulk linear field; the boundary contribution is
///   folded in here (see module docs).
/// * `k`: optional `(tables, declared sup-norm)`. Every tabulated value
///   must respect the declared bound; the bound itself is what the
///   spectral-gap certificates consume, so an understated bound would
///   silently weaken them — hence the hard check.
pub fn build_quadratic_potential(
    j: DMatrix<f64>,
    external: DVector<f64>,
    boundary: Option<&BoundaryField>,
    k: Option<(Vec<(usize, SiteTable)>, f64)>,
) -> Result<QuadraticPotential, ModelError> {
    let n = external.len();
    if j.nrows() != n || j.ncols() != n {
        return Err(ModelError::DimensionMismatch {
            what: "interaction matrix",
            expected: n,
            got: j.nrows().max(j.ncols()),
        });
    }
    let scale = j.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for kcol in (i + 1)..n {
            let diff = (j[(i, kcol)] - j[(kcol, i)]).abs();
            if diff > SYMMETRY_TOL * scale {
                return Err(ModelError::AsymmetricJ { i, k: kcol, diff });
            }
        }
    }
    if j.iter().any(|v| !v.is_finite()) || external.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Config("non-finite entry in J or h".into()));
    }

    let mut h = external;
    if let Some(field) = boundary {
        for &(site, exterior, b) in &field.couplings {
            if site >= n {
                return Err(ModelError::SiteOutOfRange { site, n });
            }
            let omega = *field
                .omega
                .get(&exterior)
                .ok_or(ModelError::MissingBoundaryValue { site: exterior })?;
            h[site] -= b * omega;
        }
    }

    let mut k_tables: Vec<Option<SiteTable>> = vec![None; n];
    let mut k_sup = 0.0;
    if let Some((tables, bound)) = k {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(ModelError::Config("K sup-norm must be finite and >= 0".into()));
        }
        for (site, table) in tables {
            if site >= n {
                return Err(ModelError::SiteOutOfRange { site, n });
            }
            let worst = table.max_abs();
            if worst > bound {
                return Err(ModelError::KSupNormViolated {
                    site,
                    value: worst,
                    bound,
                });
            }
            k_tables[site] = Some(table);
        }
        k_sup = bound;
    }

    Ok(QuadraticPotential {
        j,
        h,
        k_tables,
        k_sup,
    })
}
