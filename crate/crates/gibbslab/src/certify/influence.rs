//! Influence matrices: how strongly one boundary site can move a
//! patch conditional.
//!
//! `A` measures it in transport distance — entry `(I, k)` bounds
//! `W(Q_I | y, Q_I | z) / |y_k - z_k|` over boundary pairs differing
//! only at site `k`. `B` measures it infinitesimally — entry
//! `((I, i), k)` is the mixed second derivative of the potential in a
//! patch coordinate `i` and a boundary coordinate `k`. For quadratic
//! potentials both reduce to blocks of the precision matrix and `B` is
//! constant in the evaluation point; single-site perturbations (sums
//! of one-coordinate terms) contribute nothing to mixed derivatives,
//! so tabulated perturbations only add finite-difference noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::model::{
    gaussian_conditional_from_precision, grid_conditional, GridConditional, Model, PatchFamily,
    QuadraticPotential,
};
use crate::rng::stream;
use crate::transport::{w2_sq_exact, w2_sq_monotone_1d};

use super::CertifyError;

/// Central-difference step for mixed derivatives of perturbed
/// potentials; the stencil error is `O(step^2)`.
const FD_STEP: f64 = 1e-4;
/// Boundary-pair budget per (patch, site) before the discrete `A`
/// sweep switches from exhaustive enumeration to seeded sampling.
const PAIR_BUDGET: usize = 20_000;
/// Fixed stream seed for the sampled discrete `A` sweep (the operation
/// carries no seed parameter; determinism still matters).
const SAMPLED_A_SEED: u64 = 0xD0B0_5EED;

/// Influence matrices of a patch family. Either part may be absent
/// depending on which operation produced the value. Columns are global
/// sites; entries at in-patch columns are structurally zero.
#[derive(Debug, Clone)]
pub struct InfluenceMatrices {
    /// Rows follow the family's patch list.
    pub a: Option<DMatrix<f64>>,
    /// Rows follow `b_rows`: one per (patch index, site in patch).
    pub b: Option<DMatrix<f64>>,
    pub b_rows: Vec<(usize, usize)>,
    /// How entries were obtained: `exact-quadratic`,
    /// `exhaustive-pairs(count)` or `sampled-pairs(count)`.
    pub evaluation: String,
}

impl InfluenceMatrices {
    /// Structural checks shared by both parts: in-patch columns zero,
    /// `A` nonnegative.
    pub fn validate(&self, family: &PatchFamily) -> Result<(), CertifyError> {
        if let Some(a) = &self.a {
            for (row, patch) in family.patches().iter().enumerate() {
                for k in 0..a.ncols() {
                    let entry = a[(row, k)];
                    if entry < 0.0 || (patch.contains(k) && entry != 0.0) {
                        return Err(CertifyError::Unsupported(
                            "influence matrix A violates its structure",
                        ));
                    }
                }
            }
        }
        if let Some(b) = &self.b {
            for (row, &(member, _)) in self.b_rows.iter().enumerate() {
                let patch = &family.patches()[member];
                for k in 0..b.ncols() {
                    if patch.contains(k) && b[(row, k)] != 0.0 {
                        return Err(CertifyError::Unsupported(
                            "influence matrix B violates its structure",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Transport distance between two conditional slices of the same
/// patch, `None` when either boundary has no mass.
pub(super) fn slice_distance_sq(
    cond: &GridConditional,
    points: &[DVector<f64>],
    axis_1d: Option<&[f64]>,
    b1: usize,
    b2: usize,
) -> Result<Option<f64>, CertifyError> {
    let (Some(q1), Some(q2)) = (cond.slice(b1), cond.slice(b2)) else {
        return Ok(None);
    };
    let w_sq = match axis_1d {
        Some(axis) => w2_sq_monotone_1d(axis, q1, axis, q2)?.0,
        None => w2_sq_exact(points, q1, points, q2)?.cost,
    };
    Ok(Some(w_sq))
}

/// Worst-case transport response of each patch conditional to a
/// single-site boundary move.
///
/// Quadratic models are exact: moving boundary site `k` by `d` shifts
/// the conditional mean by `gain` column `k` times `d` and leaves the
/// conditional covariance untouched, so the transport distance is that
/// column's Euclidean norm times `|d|`. Discrete models take the sup
/// of `W(Q_I | y, Q_I | z) / |y_k - z_k|` over boundary pairs
/// differing at `k` only — exhaustively when the pair count fits the
/// budget, from a fixed-seed sample otherwise.
pub fn dobrushin_matrix_a(
    model: &Model,
    family: &PatchFamily,
) -> Result<InfluenceMatrices, CertifyError> {
    let n = family.site_count();
    let mut a = DMatrix::zeros(family.patches().len(), n);
    let evaluation = match model {
        Model::Gaussian(gaussian) => {
            for (row, patch) in family.patches().iter().enumerate() {
                let cond = gaussian_conditional_from_precision(&gaussian.potential, patch)?;
                for (col, &site) in cond.boundary_sites.iter().enumerate() {
                    a[(row, site)] = cond.gain.column(col).norm();
                }
            }
            "exact-quadratic".to_string()
        }
        Model::Grid(grid) => {
            let mut pairs_used = 0usize;
            let mut sampled = false;
            for (row, patch) in family.patches().iter().enumerate() {
                let cond = grid_conditional(&grid.measure, patch)?;
                let points: Vec<DVector<f64>> = (0..cond.patch_config_count())
                    .map(|c| cond.patch_point(c))
                    .collect();
                let axis_1d: Option<Vec<f64>> = (patch.len() == 1)
                    .then(|| cond.patch_axis(0).to_vec());
                for (bcol, &site) in cond.boundary_sites.iter().enumerate() {
                    let axis = grid.measure.axis(site);
                    let levels = cond.boundary_shape()[bcol];
                    let stride = cond.boundary_local_stride(bcol);
                    let configs = cond.boundary_config_count();
                    // Every unordered level pair at this site, with all
                    // other boundary coordinates fixed, appears exactly
                    // once in the sweep below.
                    let total = configs / levels * (levels * (levels - 1) / 2);
                    let mut sup: f64 = 0.0;
                    if total <= PAIR_BUDGET {
                        pairs_used += total;
                        for b1 in 0..configs {
                            let l1 = (b1 / stride) % levels;
                            for l2 in l1 + 1..levels {
                                let b2 = b1 + (l2 - l1) * stride;
                                if let Some(w_sq) = slice_distance_sq(
                                    &cond,
                                    &points,
                                    axis_1d.as_deref(),
                                    b1,
                                    b2,
                                )? {
                                    sup = sup.max(w_sq.sqrt() / (axis[l1] - axis[l2]).abs());
                                }
                            }
                        }
                    } else {
                        sampled = true;
                        pairs_used += PAIR_BUDGET;
                        let mut rng = stream(SAMPLED_A_SEED, &[6, row as u64, site as u64]);
                        for _ in 0..PAIR_BUDGET {
                            let b = rng.gen_range(0..configs);
                            let l1 = (b / stride) % levels;
                            let mut l2 = rng.gen_range(0..levels - 1);
                            if l2 >= l1 {
                                l2 += 1;
                            }
                            let b2 = b + l2 * stride - l1 * stride;
                            if let Some(w_sq) = slice_distance_sq(
                                &cond,
                                &points,
                                axis_1d.as_deref(),
                                b.min(b2),
                                b.max(b2),
                            )? {
                                sup = sup.max(w_sq.sqrt() / (axis[l1] - axis[l2]).abs());
                            }
                        }
                    }
                    a[(row, site)] = sup;
                }
            }
            if sampled {
                format!("sampled-pairs({pairs_used})")
            } else {
                format!("exhaustive-pairs({pairs_used})")
            }
        }
    };
    let matrices = InfluenceMatrices {
        a: Some(a),
        b: None,
        b_rows: Vec::new(),
        evaluation,
    };
    matrices.validate(family)?;
    Ok(matrices)
}

/// Mixed second derivatives of the potential across each patch
/// boundary, evaluated at the configuration that glues `eta` inside
/// the patch to `y` outside it.
///
/// Quadratic potentials give the off-patch blocks of the precision
/// matrix exactly, independent of `(eta, y)`. With tabulated
/// perturbations the entries come from a four-point central stencil on
/// the glued configuration; since perturbations are sums of
/// one-coordinate terms they cancel in the stencil, leaving the same
/// blocks up to `O(step^2)` noise.
pub fn matrix_b(
    potential: &QuadraticPotential,
    family: &PatchFamily,
    eta: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<InfluenceMatrices, CertifyError> {
    let n = potential.dim();
    if eta.len() != n || y.len() != n {
        return Err(CertifyError::Unsupported(
            "evaluation points must have model dimension",
        ));
    }
    let b_rows: Vec<(usize, usize)> = family
        .patches()
        .iter()
        .enumerate()
        .flat_map(|(m, patch)| patch.sites().iter().map(move |&i| (m, i)))
        .collect();
    let mut b = DMatrix::zeros(b_rows.len(), n);
    for (row, &(member, i)) in b_rows.iter().enumerate() {
        let patch = &family.patches()[member];
        if potential.has_perturbation() {
            // Glued configuration: patch coordinates from eta, the
            // rest from y.
            let mut x = y.clone();
            for &s in patch.sites() {
                x[s] = eta[s];
            }
            for k in 0..n {
                if patch.contains(k) {
                    continue;
                }
                let mut stencil = 0.0;
                for (si, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut point = x.clone();
                    point[i] += si * FD_STEP;
                    point[k] += sk * FD_STEP;
                    stencil += si * sk * potential.phi(&point);
                }
                b[(row, k)] = stencil / (4.0 * FD_STEP * FD_STEP);
            }
        } else {
            for k in 0..n {
                if !patch.contains(k) {
                    b[(row, k)] = potential.j()[(i, k)];
                }
            }
        }
    }
    let matrices = InfluenceMatrices {
        a: None,
        b: Some(b),
        b_rows,
        evaluation: if potential.has_perturbation() {
            format!("central-differences(step {FD_STEP})")
        } else {
            "exact-quadratic".to_string()
        },
    };
    matrices.validate(family)?;
    Ok(matrices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::{grid_two_site, two_site};
    use crate::model::{
        build_quadratic_potential, singleton_family, SiteTable,
    };
    use nalgebra::DVector;

    fn plain(j: DMatrix<f64>) -> QuadraticPotential {
        let n = j.nrows();
        build_quadratic_potential(j, DVector::zeros(n), None, None).unwrap()
    }

    #[test]
    fn independent_model_has_zero_influence() {
        let model = Model::gaussian(plain(DMatrix::from_row_slice(
            2,
            2,
            &[2.0, 0.0, 0.0, 3.0],
        )))
        .unwrap();
        let family = singleton_family(2);
        let a = dobrushin_matrix_a(&model, &family).unwrap();
        assert_eq!(a.a.unwrap().abs().max(), 0.0);
        let b = matrix_b(
            model.as_gaussian().map(|g| &g.potential).unwrap(),
            &family,
            &DVector::zeros(2),
            &DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(b.b.unwrap().abs().max(), 0.0);
    }

    #[test]
    fn two_site_coupling_appears_as_the_off_diagonal_influence() {
        let (model, family) = two_site(0.5);
        let m = dobrushin_matrix_a(&model, &family).unwrap();
        let a = m.a.unwrap();
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(1, 1)], 0.0);
        assert!((a[(0, 1)] - 0.5).abs() < 1e-12);
        assert!((a[(1, 0)] - 0.5).abs() < 1e-12);
        assert_eq!(m.evaluation, "exact-quadratic");
    }

    #[test]
    fn discrete_influence_reflects_the_quantized_response() {
        // Moving the boundary one cell `h` shifts the conditional mean
        // by `b h < h`; transporting a lattice measure by less than a
        // cell costs about `(shift * h)^(1/2)` in distance, so the
        // single-cell ratio is `sqrt(b)`, not the continuum `b`. The
        // sup is scale-free in `h` — refinement does not cure it —
        // and tail truncation only shaves it slightly.
        let (model, family) = grid_two_site(0.5, 21, 3.0);
        let m = dobrushin_matrix_a(&model, &family).unwrap();
        let a = m.a.unwrap();
        assert!(m.evaluation.starts_with("exhaustive-pairs"));
        let quantized = 0.5f64.sqrt();
        for &(r, c) in &[(0usize, 1usize), (1, 0)] {
            assert!(
                (a[(r, c)] - quantized).abs() < 0.06,
                "alpha[{r},{c}] = {} vs quantized response {quantized}",
                a[(r, c)]
            );
            assert!(a[(r, c)] >= 0.5);
        }
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(1, 1)], 0.0);
    }

    #[test]
    fn quadratic_b_is_the_off_patch_precision_block_everywhere() {
        let j = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 1.0, 0.3, 0.0, 0.3, 1.0]);
        let potential = plain(j.clone());
        let family = singleton_family(3);
        let at_zero = matrix_b(
            &potential,
            &family,
            &DVector::zeros(3),
            &DVector::zeros(3),
        )
        .unwrap();
        let elsewhere = matrix_b(
            &potential,
            &family,
            &DVector::from_row_slice(&[1.0, -2.0, 0.5]),
            &DVector::from_row_slice(&[-0.3, 0.7, 2.0]),
        )
        .unwrap();
        let b0 = at_zero.b.unwrap();
        let b1 = elsewhere.b.unwrap();
        assert_eq!(b0, b1);
        // Singleton rows follow site order, so row i column k holds
        // J_ik off the diagonal.
        for i in 0..3 {
            for k in 0..3 {
                let expected = if i == k { 0.0 } else { j[(i, k)] };
                assert_eq!(b0[(i, k)], expected);
            }
        }
    }

    #[test]
    fn tabulated_perturbations_cancel_in_the_mixed_stencil() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let xs = vec![-3.0, -1.0, 0.5, 3.0];
        let values = vec![0.05, -0.02, 0.08, 0.01];
        let table = SiteTable::new(0, xs, values).unwrap();
        let potential =
            build_quadratic_potential(j, DVector::zeros(2), None, Some((vec![(0, table)], 0.1)))
                .unwrap();
        let family = singleton_family(2);
        let m = matrix_b(
            &potential,
            &family,
            &DVector::from_row_slice(&[0.2, -0.4]),
            &DVector::from_row_slice(&[1.0, 0.3]),
        )
        .unwrap();
        let b = m.b.unwrap();
        assert!(m.evaluation.starts_with("central-differences"));
        assert!((b[(0, 1)] - 0.4).abs() < 1e-7, "b01 = {}", b[(0, 1)]);
        assert!((b[(1, 0)] - 0.4).abs() < 1e-7, "b10 = {}", b[(1, 0)]);
    }
}
