//! The single-patch and averaged redraw kernels as operators on
//! measures.

use nalgebra::{DMatrix, DVector};

use super::GibbsError;
use crate::model::{
    ConditionalLaw, GaussianConditional, GaussianMeasure, GridConditional,
    GridMeasure, Measure, Model, PatchFamily,
};

/// `G_I` on a Gaussian measure: the complement block is untouched, the
/// patch block is replaced by the model's conditional given the
/// complement. With `P` the patch rows and `C` the complement,
///
/// ```text
/// mean'_C = mean_C                   cov'_CC = cov_CC
/// mean'_P = base + gain mean_C       cov'_PC = gain cov_CC
/// cov'_PP = gain cov_CC gain' + cond_cov
/// ```
pub fn apply_gamma_patch_gaussian(
    cond: &GaussianConditional,
    r: &GaussianMeasure,
) -> Result<GaussianMeasure, GibbsError> {
    let n = r.dim();
    let patch = cond.patch.sites();
    let comp = &cond.boundary_sites;
    let m_c = DVector::from_iterator(comp.len(), comp.iter().map(|&s| r.mean()[s]));
    let s_cc = DMatrix::from_fn(comp.len(), comp.len(), |a, b| r.cov()[(comp[a], comp[b])]);

    let new_mean_p = &cond.base + &cond.gain * &m_c;
    let s_pc = &cond.gain * &s_cc;
    let s_pp = &cond.gain * &s_cc * cond.gain.transpose() + &cond.cov;

    let mut mean = r.mean().clone();
    let mut cov = r.cov().clone();
    for (a, &i) in patch.iter().enumerate() {
        mean[i] = new_mean_p[a];
        for (b, &k) in patch.iter().enumerate() {
            cov[(i, k)] = s_pp[(a, b)];
        }
        for (b, &k) in comp.iter().enumerate() {
            cov[(i, k)] = s_pc[(a, b)];
            cov[(k, i)] = s_pc[(a, b)];
        }
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    debug_assert_eq!(mean.len(), n);
    GaussianMeasure::degenerate(mean, cov).map_err(GibbsError::Model)
}

/// `G_I` on a grid measure: boundary marginal of `r` times the model's
/// conditional slice. Errors when `r` puts mass on a boundary
/// configuration where the model conditional is undefined.
pub fn apply_gamma_patch_grid(
    cond: &GridConditional,
    r: &GridMeasure,
) -> Result<GridMeasure, GibbsError> {
    let mut boundary_marginal = vec![0.0f64; cond.boundary_config_count()];
    for state in 0..r.state_count() {
        boundary_marginal[cond.boundary_index_of(state, r)] += r.prob(state);
    }
    let mut probs = vec![0.0f64; r.state_count()];
    for (b, &mass) in boundary_marginal.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let slice = cond.slice(b).ok_or_else(|| {
            GibbsError::Indeterminate(format!(
                "measure charges boundary configuration {b} where the model conditional has zero mass"
            ))
        })?;
        for (a, &w) in slice.iter().enumerate() {
            probs[cond.joint_state(b, a)] = mass * w;
        }
    }
    r.with_probs(probs).map_err(GibbsError::Model)
}

/// `G_I` on either measure type; conditional and measure modes must
/// match.
pub fn apply_gamma_patch(cond: &ConditionalLaw, r: &Measure) -> Result<Measure, GibbsError> {
    match (cond, r) {
        (ConditionalLaw::Gaussian(c), Measure::Gaussian(m)) => {
            Ok(Measure::Gaussian(apply_gamma_patch_gaussian(c, m)?))
        }
        (ConditionalLaw::Grid(c), Measure::Grid(m)) => {
            Ok(Measure::Grid(apply_gamma_patch_grid(c, m)?))
        }
        _ => Err(GibbsError::Unsupported(
            "conditional law and measure are of different modes",
        )),
    }
}

/// The averaged kernel `G` of a grid model: conditionals for every
/// family member, applied as a multiplicity-weighted mixture.
///
/// Only grids get the materialized mixture: a mixture of Gaussians is
/// not Gaussian, so the Gaussian route works with fixed patch
/// sequences and Monte Carlo instead.
pub struct GridKernel {
    conds: Vec<(GridConditional, u32)>,
    total: u32,
}

impl GridKernel {
    /// Precomputes the per-member conditionals of `model`.
    pub fn new(model: &Model, family: &PatchFamily) -> Result<Self, GibbsError> {
        let grid = model.as_grid()?;
        let mut conds = Vec::new();
        for (patch, mult) in family.iter() {
            let cond = crate::model::grid_conditional(&grid.measure, patch)?;
            conds.push((cond, mult));
        }
        Ok(GridKernel {
            conds,
            total: family.total(),
        })
    }

    pub fn members(&self) -> &[(GridConditional, u32)] {
        &self.conds
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// One application of the averaged kernel.
    pub fn apply(&self, r: &GridMeasure) -> Result<GridMeasure, GibbsError> {
        apply_gamma_grid(&self.conds, self.total, r)
    }

    /// `r G^m`.
    pub fn apply_power(&self, r: &GridMeasure, m: usize) -> Result<GridMeasure, GibbsError> {
        apply_gamma_power_grid(&self.conds, self.total, r, m)
    }
}

/// `r G = (1/N) sum_I mult(I) * (r G_I)`.
pub fn apply_gamma_grid(
    conds: &[(GridConditional, u32)],
    total: u32,
    r: &GridMeasure,
) -> Result<GridMeasure, GibbsError> {
    let mut probs = vec![0.0f64; r.state_count()];
    for (cond, mult) in conds {
        let pushed = apply_gamma_patch_grid(cond, r)?;
        let weight = *mult as f64 / total as f64;
        for (acc, &p) in probs.iter_mut().zip(pushed.probs()) {
            *acc += weight * p;
        }
    }
    r.with_probs(probs).map_err(GibbsError::Model)
}

/// `r G^m` by repeated application.
pub fn apply_gamma_power_grid(
    conds: &[(GridConditional, u32)],
    total: u32,
    r: &GridMeasure,
    m: usize,
) -> Result<GridMeasure, GibbsError> {
    let mut current = r.clone();
    for _ in 0..m {
        current = apply_gamma_grid(conds, total, &current)?;
    }
    Ok(current)
}
#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::{grid_two_site, two_site};
    use crate::model::{conditional_law, Patch};
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_patch_kernel_fixes_the_model_measure() {
        let (model, family) = two_site(0.5);
        let g = model.as_gaussian().unwrap();
        for (patch, _) in family.iter() {
            let cond = crate::model::gaussian_conditional_from_precision(&g.potential, patch)
                .unwrap();
            let pushed = apply_gamma_patch_gaussian(&cond, &g.measure).unwrap();
            assert_relative_eq!(pushed.mean(), g.measure.mean(), epsilon = 1e-10);
            assert_relative_eq!(pushed.cov(), g.measure.cov(), epsilon = 1e-10);
        }
    }

    #[test]
    fn gaussian_patch_kernel_moves_a_foreign_measure_toward_stationarity() {
        // Start from an independent standard Gaussian; after redrawing
        // site 0, its conditional given site 1 matches the model.
        let (model, _) = two_site(0.5);
        let g = model.as_gaussian().unwrap();
        let p = GaussianMeasure::standard(2);
        let cond =
            crate::model::gaussian_conditional_from_precision(&g.potential, &Patch::new(vec![0]).unwrap())
                .unwrap();
        let pushed = apply_gamma_patch_gaussian(&cond, &p).unwrap();
        // Site 1 marginal untouched.
        assert_relative_eq!(pushed.mean()[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(pushed.cov()[(1, 1)], 1.0, epsilon = 1e-14);
        // Site 0: E[x0] = E[-0.5 x1] = 0; var = 1 + 0.25; cov = -0.5.
        assert_relative_eq!(pushed.cov()[(0, 0)], 1.25, epsilon = 1e-12);
        assert_relative_eq!(pushed.cov()[(0, 1)], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn grid_patch_kernel_fixes_the_model_measure() {
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let grid = model.as_grid().unwrap();
        for (patch, _) in family.iter() {
            let cond = crate::model::grid_conditional(&grid.measure, patch).unwrap();
            let pushed = apply_gamma_patch_grid(&cond, &grid.measure).unwrap();
            for s in 0..grid.measure.state_count() {
                assert_relative_eq!(pushed.prob(s), grid.measure.prob(s), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn averaged_kernel_fixes_the_model_measure() {
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let kernel = GridKernel::new(&model, &family).unwrap();
        let q = &model.as_grid().unwrap().measure;
        let pushed = kernel.apply_power(q, 3).unwrap();
        for s in 0..q.state_count() {
            assert_relative_eq!(pushed.prob(s), q.prob(s), epsilon = 1e-12);
        }
    }

    #[test]
    fn averaged_kernel_converges_from_a_corner() {
        // Point mass in a corner; many sweeps should approach the
        // stationary law in total variation.
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let q = &model.as_grid().unwrap().measure;
        let kernel = GridKernel::new(&model, &family).unwrap();
        let mut corner = vec![0.0; q.state_count()];
        corner[0] = 1.0;
        let p = q.with_probs(corner).unwrap();
        let pushed = kernel.apply_power(&p, 60).unwrap();
        let tv: f64 = pushed
            .probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1e-6, "total variation after 60 sweeps was {tv}");
    }

    #[test]
    fn grid_kernel_rejects_mass_on_undefined_boundaries() {
        // Model measure with a zero-mass boundary level at site 1;
        // a measure charging it cannot be redrawn.
        let q = GridMeasure::new(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![0.5, 0.0, 0.5, 0.0],
        )
        .unwrap();
        let cond = crate::model::grid_conditional(&q, &Patch::new(vec![0]).unwrap()).unwrap();
        let r = GridMeasure::new(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![0.25, 0.25, 0.25, 0.25],
        )
        .unwrap();
        assert!(matches!(
            apply_gamma_patch_grid(&cond, &r),
            Err(GibbsError::Indeterminate(_))
        ));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let (gauss_model, _) = two_site(0.5);
        let (grid_model, family) = grid_two_site(0.5, 3, 1.0);
        let cond = conditional_law(&grid_model, &family.patches()[0]).unwrap();
        let r = gauss_model.measure();
        assert!(matches!(
            apply_gamma_patch(&cond, &r),
            Err(GibbsError::Unsupported(_))
        ));
    }
}
