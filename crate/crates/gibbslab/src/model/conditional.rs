//! Conditional laws of a patch given the rest of the configuration.
//!
//! For a Gaussian with precision `J` and linear term `h`, the law of
//! the patch block `x_I` given the complement `x_C` is Gaussian with
//!
//! ```text
//! cov  = (J_II)^{-1}
//! mean = (J_II)^{-1} (h_I - J_IC x_C) = base + gain x_C
//! ```
//!
//! i.e. the conditional covariance does not depend on the boundary and
//! the conditional mean is affine in it — the two facts the coupled
//! sampler and the closed-form contraction certificates rely on.
//!
//! For grid measures the conditional is tabulated: one normalized
//! weight vector over patch configurations per boundary configuration,
//! with zero-mass boundaries recorded as undefined.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{GridMeasure, Model, ModelError, Patch, QuadraticPotential};

/// Extracts the subvector `x[sites]` in the given site order.
pub fn subvector(x: &DVector<f64>, sites: &[usize]) -> DVector<f64> {
    DVector::from_iterator(sites.len(), sites.iter().map(|&s| x[s]))
}

/// Extracts the submatrix `m[rows, cols]`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Gaussian conditional of a patch: `x_I | x_C ~ N(base + gain x_C, cov)`.
///
/// `gain` columns follow the complement sites in increasing order.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub patch: Patch,
    /// Complement sites, increasing; the column order of `gain`.
    pub boundary_sites: Vec<usize>,
    pub base: DVector<f64>,
    pub gain: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianConditional {
    /// Conditional mean given full configuration `x` (only the
    /// complement coordinates of `x` are read).
    pub fn mean_given(&self, x: &DVector<f64>) -> DVector<f64> {
        let boundary = subvector(x, &self.boundary_sites);
        &self.base + &self.gain * boundary
    }
}

/// Conditional from the precision form (`J`, `h`). Requires `J_II`
/// positive definite.
pub fn gaussian_conditional_from_precision(
    potential: &QuadraticPotential,
    patch: &Patch,
) -> Result<GaussianConditional, ModelError> {
    let n = potential.dim();
    if let Some(&site) = patch.sites().iter().find(|&&s| s >= n) {
        return Err(ModelError::SiteOutOfRange { site, n });
    }
    let boundary_sites = patch.complement(n);
    let j_ii = submatrix(potential.j(), patch.sites(), patch.sites());
    let chol = Cholesky::new(j_ii).ok_or(ModelError::NotPositiveDefinite)?;
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let h_i = subvector(potential.h(), patch.sites());
    let base = chol.solve(&h_i);
    let gain = if boundary_sites.is_empty() {
        DMatrix::zeros(patch.len(), 0)
    } else {
        let j_ic = submatrix(potential.j(), patch.sites(), &boundary_sites);
        -chol.solve(&j_ic)
    };
    Ok(GaussianConditional {
        patch: patch.clone(),
        boundary_sites,
        base,
        gain,
        cov,
    })
}

/// Conditional from the moment form (mean, covariance) via the Schur
/// complement: `gain = S_IC S_CC^{-1}`, `cov = S_II - gain S_CI`.
pub fn gaussian_conditional_from_measure(
    measure: &super::GaussianMeasure,
    patch: &Patch,
) -> Result<GaussianConditional, ModelError> {
    let n = measure.dim();
    if let Some(&site) = patch.sites().iter().find(|&&s| s >= n) {
        return Err(ModelError::SiteOutOfRange { site, n });
    }
    let boundary_sites = patch.complement(n);
    let s_ii = submatrix(measure.cov(), patch.sites(), patch.sites());
    let m_i = subvector(measure.mean(), patch.sites());
    if boundary_sites.is_empty() {
        return Ok(GaussianConditional {
            patch: patch.clone(),
            boundary_sites,
            base: m_i,
            gain: DMatrix::zeros(patch.len(), 0),
            cov: s_ii,
        });
    }
    let s_cc = submatrix(measure.cov(), &boundary_sites, &boundary_sites);
    let s_ic = submatrix(measure.cov(), patch.sites(), &boundary_sites);
    let chol = Cholesky::new(s_cc).ok_or(ModelError::NotPositiveDefinite)?;
    // gain' = S_CC^{-1} S_CI, solved column-block at once.
    let gain = chol.solve(&s_ic.transpose()).transpose();
    let cov = &s_ii - &gain * s_ic.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let m_c = subvector(measure.mean(), &boundary_sites);
    let base = &m_i - &gain * m_c;
    Ok(GaussianConditional {
        patch: patch.clone(),
        boundary_sites,
        base,
        gain,
        cov,
    })
}

/// Tabulated grid conditional: one weight vector over patch
/// configurations for each boundary configuration.
#[derive(Debug, Clone)]
pub struct GridConditional {
    pub patch: Patch,
    /// Complement sites, increasing.
    pub boundary_sites: Vec<usize>,
    /// Axes of the patch sites (patch order).
    patch_axes: Vec<Vec<f64>>,
    /// Global strides of patch sites / boundary sites in the joint tensor.
    patch_global_strides: Vec<usize>,
    boundary_global_strides: Vec<usize>,
    /// Local row-major strides within the patch block / boundary block.
    patch_local_strides: Vec<usize>,
    boundary_local_strides: Vec<usize>,
    patch_shape: Vec<usize>,
    boundary_shape: Vec<usize>,
    /// `slices[b]`: conditional over patch configs at boundary `b`;
    /// `None` when the boundary has zero marginal mass.
    slices: Vec<Option<Vec<f64>>>,
    /// Marginal weights of the boundary configurations.
    boundary_weights: Vec<f64>,
}

fn local_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len().max(1)];
    s.truncate(shape.len());
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl GridConditional {
    pub fn patch_config_count(&self) -> usize {
        self.patch_shape.iter().product()
    }

    pub fn boundary_config_count(&self) -> usize {
        self.boundary_shape.iter().product()
    }

    pub fn boundary_weight(&self, b: usize) -> f64 {
        self.boundary_weights[b]
    }

    pub fn slice(&self, b: usize) -> Option<&[f64]> {
        self.slices[b].as_deref()
    }

    /// Local boundary index of a flat joint state.
    pub fn boundary_index_of(&self, state: usize, measure: &GridMeasure) -> usize {
        self.boundary_sites
            .iter()
            .zip(&self.boundary_local_strides)
            .map(|(&site, &stride)| measure.level_of(state, site) * stride)
            .sum()
    }

    /// Local patch index of a flat joint state.
    pub fn patch_index_of(&self, state: usize, measure: &GridMeasure) -> usize {
        self.patch
            .sites()
            .iter()
            .zip(&self.patch_local_strides)
            .map(|(&site, &stride)| measure.level_of(state, site) * stride)
            .sum()
    }

    /// Flat joint state assembled from local boundary and patch indices.
    pub fn joint_state(&self, b: usize, a: usize) -> usize {
        let mut state = 0usize;
        for (k, &stride) in self.boundary_local_strides.iter().enumerate() {
            let level = (b / stride) % self.boundary_shape[k];
            state += level * self.boundary_global_strides[k];
        }
        for (k, &stride) in self.patch_local_strides.iter().enumerate() {
            let level = (a / stride) % self.patch_shape[k];
            state += level * self.patch_global_strides[k];
        }
        state
    }

    /// Axis of the `k`-th patch site (patch order).
    pub fn patch_axis(&self, k: usize) -> &[f64] {
        &self.patch_axes[k]
    }

    /// Levels per boundary site (boundary order).
    pub fn boundary_shape(&self) -> &[usize] {
        &self.boundary_shape
    }

    /// Stride of the `k`-th boundary site within local boundary
    /// indices.
    pub fn boundary_local_stride(&self, k: usize) -> usize {
        self.boundary_local_strides[k]
    }

    /// Embedded coordinates of a patch configuration (patch order).
    pub fn patch_point(&self, a: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.patch_axes.len(),
            self.patch_axes.iter().enumerate().map(|(k, axis)| {
                let level = (a / self.patch_local_strides[k]) % self.patch_shape[k];
                axis[level]
            }),
        )
    }
}

/// Tabulates the conditional of `patch` under `measure` by one sweep
/// over the joint tensor.
pub fn grid_conditional(
    measure: &GridMeasure,
    patch: &Patch,
) -> Result<GridConditional, ModelError> {
    let n = measure.site_count();
    if let Some(&site) = patch.sites().iter().find(|&&s| s >= n) {
        return Err(ModelError::SiteOutOfRange { site, n });
    }
    let boundary_sites = patch.complement(n);
    let patch_shape: Vec<usize> = patch.sites().iter().map(|&s| measure.axis(s).len()).collect();
    let boundary_shape: Vec<usize> = boundary_sites
        .iter()
        .map(|&s| measure.axis(s).len())
        .collect();
    let patch_local_strides = local_strides(&patch_shape);
    let boundary_local_strides = local_strides(&boundary_shape);
    let patch_count: usize = patch_shape.iter().product();
    let boundary_count: usize = boundary_shape.iter().product();

    let mut cond = GridConditional {
        patch: patch.clone(),
        patch_axes: patch.sites().iter().map(|&s| measure.axis(s).to_vec()).collect(),
        patch_global_strides: patch.sites().iter().map(|&s| measure.strides()[s]).collect(),
        boundary_global_strides: boundary_sites
            .iter()
            .map(|&s| measure.strides()[s])
            .collect(),
        boundary_sites,
        patch_local_strides,
        boundary_local_strides,
        patch_shape,
        boundary_shape,
        slices: Vec::new(),
        boundary_weights: vec![0.0; boundary_count],
    };

    let mut joint = vec![vec![0.0f64; patch_count]; boundary_count];
    for state in 0..measure.state_count() {
        let b = cond.boundary_index_of(state, measure);
        let a = cond.patch_index_of(state, measure);
        joint[b][a] += measure.prob(state);
    }
    cond.slices = joint
        .into_iter()
        .enumerate()
        .map(|(b, mut row)| {
            let mass: f64 = row.iter().sum();
            cond.boundary_weights[b] = mass;
            if mass > 0.0 {
                for w in &mut row {
                    *w /= mass;
                }
                Some(row)
            } else {
                None
            }
        })
        .collect();
    Ok(cond)
}

/// A conditional law in either mode.
#[derive(Debug, Clone)]
pub enum ConditionalLaw {
    Gaussian(GaussianConditional),
    Grid(GridConditional),
}

/// The conditional law of `patch` under `model`.
///
/// Gaussian models use the precision form; grid models tabulate from
/// the joint tensor.
pub fn conditional_law(model: &Model, patch: &Patch) -> Result<ConditionalLaw, ModelError> {
    match model {
        Model::Gaussian(m) => Ok(ConditionalLaw::Gaussian(
            gaussian_conditional_from_precision(&m.potential, patch)?,
        )),
        Model::Grid(m) => Ok(ConditionalLaw::Grid(grid_conditional(&m.measure, patch)?)),
    }
}
