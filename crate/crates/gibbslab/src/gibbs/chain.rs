//! Interpolation chains: a fixed patch sequence bridging an arbitrary
//! start measure to the model measure, with step-optimal couplings.
//!
//! Step `l` applies the single-patch kernel for member `seq[l]`. Both
//! endpoints of a step share their boundary marginal (the kernel never
//! touches the complement), so the step coupling keeps the boundary
//! and couples the two conditional laws on the patch optimally given
//! it. Everything reported here is computed exactly:
//!
//! * Gaussian: given the boundary, both conditionals are Gaussian with
//!   boundary-independent covariances, so the optimal coupling is a
//!   deterministic affine map; a whole step is one affine map of the
//!   full space and the chain composes to a single affine map. The
//!   end-to-end displacement moment is then a closed form.
//! * Grid: conditionals couple through the monotone plan (single-site
//!   patches) or the exact transport LP (larger patches); the joint
//!   law of (start state, current state) flows through the step
//!   transition rows.
//!
//! The trace records, per step, the divergence increment
//! `D(r(l-1) || r(l))` and the displacement second moment
//! `E |Z_I(l) - Z_I(l-1)|^2`, plus the end-to-end moment
//! `E |Z(0) - Z(M)|^2` and the telescoping residual of the divergence
//! decomposition — the quantities the verification suites consume.

use nalgebra::{DMatrix, DVector};

use super::kernel::{apply_gamma_patch_gaussian, apply_gamma_patch_grid};
use super::GibbsError;
use crate::divergence::{kl_gaussian, kl_grid};
use crate::model::{
    gaussian_conditional_from_measure, gaussian_conditional_from_precision, grid_conditional,
    GridConditional, Measure, Model, PatchFamily,
};
use crate::transport::{optimal_gaussian_map, w2_sq_exact, w2_sq_monotone_1d};

/// Largest joint (start x current) grid tensor the chain will carry.
const MAX_JOINT_CELLS: usize = 4_000_000;

/// One step of a chain trace.
#[derive(Debug, Clone)]
pub struct ChainStep {
    /// Index of the applied member in the patch family.
    pub member: usize,
    /// `D(r(l-1) || r(l))`.
    pub divergence: f64,
    /// `E |Z_I(l) - Z_I(l-1)|^2` under the step coupling.
    pub disp_sq: f64,
}

/// A fully evaluated interpolation chain.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub seq: Vec<usize>,
    pub steps: Vec<ChainStep>,
    /// `D(p || q)`.
    pub initial_divergence: f64,
    /// `D(r(M) || q)`.
    pub tail_divergence: f64,
    /// `E |Z(0) - Z(M)|^2` under the composed coupling.
    pub end_to_end_sq: f64,
    /// `|D(p||q) - sum_l D(r(l-1)||r(l)) - D(r(M)||q)|`; `None` when an
    /// infinite divergence makes the telescope numerically undefined.
    pub decomposition_residual: Option<f64>,
    /// `r(M)`.
    pub final_measure: Measure,
}

impl ChainTrace {
    /// Sum of the per-step divergences.
    pub fn step_divergence_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.divergence).sum()
    }

    /// Sum of the per-step displacement moments.
    pub fn step_disp_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.disp_sq).sum()
    }
}

/// Runs the chain for `seq` (member indices into `family.patches()`).
pub fn interpolation_chain(
    model: &Model,
    family: &PatchFamily,
    p: &Measure,
    seq: &[usize],
) -> Result<ChainTrace, GibbsError> {
    for &m in seq {
        assert!(m < family.patches().len(), "member index out of range");
    }
    match (model, p) {
        (Model::Gaussian(_), Measure::Gaussian(start)) => gaussian_chain(model, family, start, seq),
        (Model::Grid(_), Measure::Grid(start)) => grid_chain(model, family, start, seq),
        _ => Err(GibbsError::Unsupported(
            "start measure mode must match the model mode",
        )),
    }
}

fn residual_of(initial: f64, steps: &[ChainStep], tail: f64) -> Option<f64> {
    let sum: f64 = steps.iter().map(|s| s.divergence).sum::<f64>() + tail;
    if initial.is_finite() && sum.is_finite() {
        Some((initial - sum).abs())
    } else {
        None
    }
}

fn gaussian_chain(
    model: &Model,
    family: &PatchFamily,
    start: &crate::model::GaussianMeasure,
    seq: &[usize],
) -> Result<ChainTrace, GibbsError> {
    let gm = model.as_gaussian()?;
    let n = start.dim();
    let q_conds: Vec<_> = family
        .patches()
        .iter()
        .map(|patch| gaussian_conditional_from_precision(&gm.potential, patch))
        .collect::<Result<_, _>>()?;

    let mut r = start.clone();
    let mut m_total = DMatrix::<f64>::identity(n, n);
    let mut c_total = DVector::<f64>::zeros(n);
    let mut steps = Vec::with_capacity(seq.len());

    for &member in seq {
        let patch = &family.patches()[member];
        let q_cond = &q_conds[member];
        let r_cond = gaussian_conditional_from_measure(&r, patch)?;

        // Optimal map between the two conditional covariances (the
        // means are handled by the affine offsets below).
        let zeros = DVector::zeros(patch.len());
        let src = crate::model::GaussianMeasure::degenerate(zeros.clone(), r_cond.cov.clone())?;
        let dst = crate::model::GaussianMeasure::degenerate(zeros, q_cond.cov.clone())?;
        let map = optimal_gaussian_map(&src, &dst)?;

        // Step affine map: identity on the complement; on the patch
        //   z'_P = A z_P + (q_gain - A r_gain) z_C + (q_base - A r_base).
        let mut m_l = DMatrix::<f64>::identity(n, n);
        let mut c_l = DVector::<f64>::zeros(n);
        let cross = &q_cond.gain - &map.a * &r_cond.gain;
        let offset = &q_cond.base - &map.a * &r_cond.base;
        for (row, &i) in patch.sites().iter().enumerate() {
            c_l[i] = offset[row];
            for (col, &k) in patch.sites().iter().enumerate() {
                m_l[(i, k)] = map.a[(row, col)];
            }
            for (col, &k) in q_cond.boundary_sites.iter().enumerate() {
                m_l[(i, k)] = cross[(row, col)];
            }
        }

        // Displacement second moment of this step under r(l-1).
        let delta = &m_l - DMatrix::<f64>::identity(n, n);
        let dmean = &delta * r.mean() + &c_l;
        let disp_sq = dmean.norm_squared() + (&delta * r.cov() * delta.transpose()).trace();

        let r_next = apply_gamma_patch_gaussian(q_cond, &r)?;
        let divergence = kl_gaussian(&r, &r_next)?;

        // Consistency: the affine image of r must be exactly r_next.
        debug_assert!({
            let mapped_mean = &m_l * r.mean() + &c_l;
            (mapped_mean - r_next.mean()).norm() < 1e-8
        });

        c_total = &m_l * &c_total + &c_l;
        m_total = &m_l * &m_total;
        r = r_next;
        steps.push(ChainStep {
            member,
            divergence,
            disp_sq,
        });
    }

    let residual_map = DMatrix::<f64>::identity(n, n) - &m_total;
    let dmean = &residual_map * start.mean() - &c_total;
    let end_to_end_sq =
        dmean.norm_squared() + (&residual_map * start.cov() * residual_map.transpose()).trace();

    let initial = kl_gaussian(start, &gm.measure)?;
    let tail = kl_gaussian(&r, &gm.measure)?;
    let residual = residual_of(initial, &steps, tail);
    Ok(ChainTrace {
        seq: seq.to_vec(),
        steps,
        initial_divergence: initial,
        tail_divergence: tail,
        end_to_end_sq,
        decomposition_residual: residual,
        final_measure: Measure::Gaussian(r),
    })
}

fn grid_chain(
    model: &Model,
    family: &PatchFamily,
    start: &crate::model::GridMeasure,
    seq: &[usize],
) -> Result<ChainTrace, GibbsError> {
    let gm = model.as_grid()?;
    let q = &gm.measure;
    if !start.same_support(q) {
        return Err(GibbsError::Unsupported(
            "start measure must share the model grid",
        ));
    }
    let s_count = q.state_count();
    if s_count.saturating_mul(s_count) > MAX_JOINT_CELLS {
        return Err(GibbsError::Unsupported(
            "grid too large for exact chain coupling",
        ));
    }
    let q_conds: Vec<GridConditional> = family
        .patches()
        .iter()
        .map(|patch| grid_conditional(q, patch))
        .collect::<Result<_, _>>()?;

    // joint[z0 * S + z] = Pr(Z(0) = z0, Z(l) = z).
    let mut joint = vec![0.0f64; s_count * s_count];
    for z0 in 0..s_count {
        joint[z0 * s_count + z0] = start.prob(z0);
    }
    let mut r = start.clone();
    let mut steps = Vec::with_capacity(seq.len());

    for &member in seq {
        let patch = &family.patches()[member];
        let q_cond = &q_conds[member];
        let r_cond = grid_conditional(&r, patch)?;

        // Per-boundary optimal plans give both the displacement moment
        // and the transition rows of the step coupling.
        let mut disp_sq = 0.0;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s_count];
        for b in 0..q_cond.boundary_config_count() {
            let mass = r_cond.boundary_weight(b);
            if mass <= 0.0 {
                continue;
            }
            let src = r_cond.slice(b).expect("positive mass has a slice");
            let tgt = q_cond.slice(b).ok_or_else(|| {
                GibbsError::Indeterminate(format!(
                    "chain start charges boundary {b} where the model conditional is undefined"
                ))
            })?;
            let (cost, plan) = if patch.len() == 1 {
                let axis = q.axis(patch.sites()[0]);
                w2_sq_monotone_1d(axis, src, axis, tgt)?
            } else {
                let points: Vec<DVector<f64>> = (0..q_cond.patch_config_count())
                    .map(|a| q_cond.patch_point(a))
                    .collect();
                let sol = w2_sq_exact(&points, src, &points, tgt)?;
                (sol.cost, sol.plan)
            };
            disp_sq += mass * cost;
            for (a, row) in plan.conditional_rows().into_iter().enumerate() {
                if row.is_empty() {
                    continue;
                }
                let z = q_cond.joint_state(b, a);
                rows[z] = row
                    .into_iter()
                    .map(|(a_next, w)| (q_cond.joint_state(b, a_next), w))
                    .collect();
            }
        }

        // Flow the joint law through the step transition.
        let mut next_joint = vec![0.0f64; s_count * s_count];
        for z0 in 0..s_count {
            let base = z0 * s_count;
            for z in 0..s_count {
                let mass = joint[base + z];
                if mass <= 0.0 {
                    continue;
                }
                if rows[z].is_empty() {
                    return Err(GibbsError::Indeterminate(format!(
                        "joint mass at state {z} has no step-coupling row"
                    )));
                }
                for &(z_next, w) in &rows[z] {
                    next_joint[base + z_next] += mass * w;
                }
            }
        }
        joint = next_joint;

        let r_next = apply_gamma_patch_grid(q_cond, &r)?;
        let divergence = kl_grid(&r, &r_next)?;
        r = r_next;
        steps.push(ChainStep {
            member,
            divergence,
            disp_sq,
        });
    }

    // End-to-end displacement moment from the joint law.
    let mut end_to_end_sq = 0.0;
    for z0 in 0..s_count {
        let x0 = q.point(z0);
        for z in 0..s_count {
            let mass = joint[z0 * s_count + z];
            if mass > 0.0 {
                end_to_end_sq += mass * (&x0 - q.point(z)).norm_squared();
            }
        }
    }
    // The current-state marginal of the joint must be r(M).
    debug_assert!({
        let mut marg = vec![0.0f64; s_count];
        for z0 in 0..s_count {
            for z in 0..s_count {
                marg[z] += joint[z0 * s_count + z];
            }
        }
        marg.iter()
            .zip(r.probs())
            .all(|(a, b)| (a - b).abs() < 1e-9)
    });

    let initial = kl_grid(start, q)?;
    let tail = kl_grid(&r, q)?;
    let residual = residual_of(initial, &steps, tail);
    Ok(ChainTrace {
        seq: seq.to_vec(),
        steps,
        initial_divergence: initial,
        tail_divergence: tail,
        end_to_end_sq,
        decomposition_residual: residual,
        final_measure: Measure::Grid(r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::{grid_two_site, two_site};
    use crate::model::GaussianMeasure;
    use approx::assert_relative_eq;

    fn shifted_gaussian_start() -> GaussianMeasure {
        GaussianMeasure::new(
            DVector::from_row_slice(&[1.5, -0.5]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.8]),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_chain_telescopes_exactly() {
        let (model, family) = two_site(0.5);
        let p = Measure::Gaussian(shifted_gaussian_start());
        let trace = interpolation_chain(&model, &family, &p, &[0, 1, 0, 1, 0, 1]).unwrap();
        let residual = trace.decomposition_residual.expect("finite divergences");
        assert!(residual < 1e-10, "telescoping residual {residual}");
        // All step divergences are nonnegative and the tail shrinks
        // below the initial divergence.
        assert!(trace.steps.iter().all(|s| s.divergence >= 0.0));
        assert!(trace.tail_divergence < trace.initial_divergence);
    }

    #[test]
    fn gaussian_chain_end_to_end_moment_bounds_transport() {
        // E|Z(0) - Z(M)|^2 dominates W2^2(p, r(M)) and is finite.
        let (model, family) = two_site(0.5);
        let p = shifted_gaussian_start();
        let trace =
            interpolation_chain(&model, &family, &Measure::Gaussian(p.clone()), &[0, 1, 0, 1])
                .unwrap();
        let r_m = trace.final_measure.as_gaussian().unwrap();
        let w2 = crate::transport::w2_sq_gaussian(&p, r_m).unwrap();
        assert!(
            trace.end_to_end_sq >= w2 - 1e-10,
            "coupling moment {} below the optimal cost {}",
            trace.end_to_end_sq,
            w2
        );
    }

    #[test]
    fn gaussian_chain_from_stationarity_never_moves() {
        let (model, family) = two_site(0.5);
        let q = model.measure();
        let trace = interpolation_chain(&model, &family, &q, &[0, 1, 0]).unwrap();
        assert!(trace.end_to_end_sq < 1e-12);
        assert!(trace.step_divergence_sum() < 1e-12);
        assert_eq!(trace.initial_divergence, 0.0);
    }

    #[test]
    fn grid_chain_telescopes_exactly() {
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let q = &model.as_grid().unwrap().measure;
        // Tilted start: renormalized q^2 (still positive everywhere).
        let tilted: Vec<f64> = q.probs().iter().map(|p| p * p).collect();
        let p = q.with_probs(tilted).unwrap();
        let trace =
            interpolation_chain(&model, &family, &Measure::Grid(p), &[0, 1, 0, 1]).unwrap();
        let residual = trace.decomposition_residual.expect("finite divergences");
        assert!(residual < 1e-10, "telescoping residual {residual}");
    }

    #[test]
    fn grid_chain_end_to_end_moment_bounds_transport() {
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let q = &model.as_grid().unwrap().measure;
        let mut corner = vec![0.0; q.state_count()];
        corner[q.state_count() - 1] = 1.0;
        let p = q.with_probs(corner).unwrap();
        let trace =
            interpolation_chain(&model, &family, &Measure::Grid(p.clone()), &[0, 1, 0, 1, 0, 1])
                .unwrap();
        let r_m = trace.final_measure.as_grid().unwrap();
        let w2 = crate::transport::w2_sq_grid(&p, r_m).unwrap().cost;
        assert!(trace.end_to_end_sq >= w2 - 1e-10);
        // The chain should have moved the point mass substantially.
        assert!(trace.end_to_end_sq > 0.1);
    }

    #[test]
    fn grid_chain_from_stationarity_never_moves() {
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let q = model.measure();
        let trace = interpolation_chain(&model, &family, &q, &[0, 1]).unwrap();
        assert!(trace.end_to_end_sq < 1e-12);
        assert_eq!(trace.initial_divergence, 0.0);
    }

    #[test]
    fn step_displacement_lives_on_the_patch_only() {
        // A single step never moves the complement, so for a product
        // start differing only at the redrawn site, the displacement
        // equals the 1D transport between the site conditionals.
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let q = &model.as_grid().unwrap().measure;
        let tilted: Vec<f64> = (0..q.state_count())
            .map(|s| q.prob(s) * (1.0 + 0.3 * q.point(s)[0]).max(0.1))
            .collect();
        let p = q.with_probs(tilted).unwrap();
        let trace =
            interpolation_chain(&model, &family, &Measure::Grid(p.clone()), &[0]).unwrap();
        // Exact cross-check: E_b W2^2(p(.|b), q(.|b)) over boundary b.
        let patch = &family.patches()[0];
        let p_cond = grid_conditional(&p, patch).unwrap();
        let q_cond = grid_conditional(q, patch).unwrap();
        let axis = q.axis(0);
        let mut expected = 0.0;
        for b in 0..p_cond.boundary_config_count() {
            let mass = p_cond.boundary_weight(b);
            if mass > 0.0 {
                let (cost, _) = w2_sq_monotone_1d(
                    axis,
                    p_cond.slice(b).unwrap(),
                    axis,
                    q_cond.slice(b).unwrap(),
                )
                .unwrap();
                expected += mass * cost;
            }
        }
        assert_relative_eq!(trace.steps[0].disp_sq, expected, epsilon = 1e-12);
        assert_relative_eq!(trace.end_to_end_sq, expected, epsilon = 1e-12);
    }

    #[test]
    fn conditional_of_coupled_pair_is_not_the_sweep_kernel() {
        // The coupling achieving the chain bounds keeps the redrawn
        // patch correlated with the start state; its conditional law
        // given the start therefore differs from the averaged kernel,
        // even after a single step. Demonstrated on the two-site grid:
        // compare dist(Z(1) | Z(0) = z) under the member-averaged step
        // coupling against the averaged kernel row at z.
        let (model, family) = grid_two_site(0.5, 5, 2.0);
        let q = &model.as_grid().unwrap().measure;
        let s_count = q.state_count();
        // Start from a full-support non-stationary measure.
        let tilted: Vec<f64> = q.probs().iter().map(|p| p.sqrt()).collect();
        let p = q.with_probs(tilted).unwrap();

        // Averaged step-coupling joint over the two members.
        let mut avg_joint = vec![0.0f64; s_count * s_count];
        for member in 0..2 {
            let trace =
                interpolation_chain(&model, &family, &Measure::Grid(p.clone()), &[member])
                    .unwrap();
            // Reconstruct the joint by rerunning the coupling: the
            // final measure is G_I p; recover the joint via the step
            // plan by brute force over boundaries.
            let patch = &family.patches()[member];
            let p_cond = grid_conditional(&p, patch).unwrap();
            let q_cond = grid_conditional(q, patch).unwrap();
            let axis = q.axis(patch.sites()[0]);
            for b in 0..p_cond.boundary_config_count() {
                let mass = p_cond.boundary_weight(b);
                if mass <= 0.0 {
                    continue;
                }
                let (_, plan) = w2_sq_monotone_1d(
                    axis,
                    p_cond.slice(b).unwrap(),
                    axis,
                    q_cond.slice(b).unwrap(),
                )
                .unwrap();
                for &(a, a_next, m) in plan.entries() {
                    let z = q_cond.joint_state(b, a);
                    let z_next = q_cond.joint_state(b, a_next);
                    avg_joint[z * s_count + z_next] += 0.5 * mass * m;
                }
            }
            let _ = trace;
        }

        // Averaged kernel rows at each start state.
        let kernel = crate::gibbs::GridKernel::new(&model, &family).unwrap();
        let mut max_gap = 0.0f64;
        for z in 0..s_count {
            let row_mass: f64 = (0..s_count).map(|z2| avg_joint[z * s_count + z2]).sum();
            if row_mass <= 1e-12 {
                continue;
            }
            // Kernel row: push a point mass at z through G.
            let mut delta = vec![0.0; s_count];
            delta[z] = 1.0;
            let pushed = kernel.apply(&q.with_probs(delta).unwrap()).unwrap();
            for z2 in 0..s_count {
                let coupled = avg_joint[z * s_count + z2] / row_mass;
                max_gap = max_gap.max((coupled - pushed.prob(z2)).abs());
            }
        }
        assert!(
            max_gap > 1e-3,
            "coupling conditional unexpectedly matched the kernel (gap {max_gap})"
        );
    }
}
