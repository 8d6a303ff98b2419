//! Contraction deficiency checks: the direct conditional-comparison
//! sup, the influence-matrix bound, and the derivative-matrix bound.
//!
//! All three compare the family sum
//! `sum_I mult_I * W^2(Q_I | y, Q_I | z)` against `t |y - z|^2` and
//! report `delta = 1 - sup/t`. For a quadratic model the conditional
//! covariance of a patch does not depend on the boundary, so each
//! summand is exactly the squared conditional-mean shift and the whole
//! sum is `|G (y - z)|^2` for a fixed stacked matrix `G`; the sup is
//! then the operator norm squared, no search involved.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::model::{
    gaussian_conditional_from_precision, grid_conditional, GridConditional, GridMeasure, Model,
    PatchFamily, QuadraticPotential,
};
use crate::rng::stream;

use super::influence::slice_distance_sq;
use super::{
    matrix_b, operator_norm, outcome_from_sup, CertifyError, ContractivityMethod,
    ContractivityOutcome, ContractivityWitness, InfluenceMatrices, RhoCertificate,
};

/// Hill-climb restarts for sampled sup searches.
const CLIMB_RESTARTS: u64 = 200;
/// Accepted-move cap per restart.
const CLIMB_STEPS: u32 = 60;
/// Ratio guard for the corollary coefficient: `norm_b / rho` at or
/// beyond `1 - GUARD` is rejected rather than amplified.
const CONTRACTION_GUARD: f64 = 1e-9;

/// Exact single-sweep comparison for a quadratic potential: stacks
/// every member's conditional-mean response `sqrt(mult) * gain` into
/// the boundary columns and takes the operator norm. Works from the
/// potential alone — the patch blocks `J_II` must be positive definite
/// but the full matrix need not be, so non-normalizable potentials can
/// still be *checked* (and fail honestly).
pub fn check_contractivity_def1_gaussian(
    potential: &QuadraticPotential,
    family: &PatchFamily,
) -> Result<ContractivityOutcome, CertifyError> {
    let n = potential.dim();
    let rows: usize = family.patches().iter().map(|p| p.len()).sum();
    let mut g = DMatrix::zeros(rows, n);
    let mut row0 = 0usize;
    for (patch, mult) in family.iter() {
        let cond = gaussian_conditional_from_precision(potential, patch)?;
        let weight = f64::from(mult).sqrt();
        for (col, &site) in cond.boundary_sites.iter().enumerate() {
            for r in 0..patch.len() {
                g[(row0 + r, site)] = weight * cond.gain[(r, col)];
            }
        }
        row0 += patch.len();
    }
    let norm = operator_norm(&g)?;
    Ok(outcome_from_sup(
        norm * norm,
        family.min_coverage(),
        ContractivityMethod::Def1Exact,
        ContractivityWitness::OperatorNorm { norm },
    ))
}

/// Per-member workspace for grid comparisons: conditional tables plus
/// a memo of slice distances.
struct MemberDistances {
    cond: GridConditional,
    points: Vec<DVector<f64>>,
    axis_1d: Option<Vec<f64>>,
    memo: HashMap<(usize, usize), Option<f64>>,
}

impl MemberDistances {
    fn new(measure: &GridMeasure, patch: &crate::model::Patch) -> Result<Self, CertifyError> {
        let cond = grid_conditional(measure, patch)?;
        let points = (0..cond.patch_config_count())
            .map(|c| cond.patch_point(c))
            .collect();
        let axis_1d = (patch.len() == 1).then(|| cond.patch_axis(0).to_vec());
        Ok(MemberDistances {
            cond,
            points,
            axis_1d,
            memo: HashMap::new(),
        })
    }

    /// `W^2` between the conditional slices this member sees at two
    /// joint states; `None` when a slice is undefined.
    fn between(
        &mut self,
        y: usize,
        z: usize,
        measure: &GridMeasure,
    ) -> Result<Option<f64>, CertifyError> {
        let by = self.cond.boundary_index_of(y, measure);
        let bz = self.cond.boundary_index_of(z, measure);
        if by == bz {
            return Ok(Some(0.0));
        }
        let key = (by.min(bz), by.max(bz));
        if let Some(&hit) = self.memo.get(&key) {
            return Ok(hit);
        }
        let w = slice_distance_sq(
            &self.cond,
            &self.points,
            self.axis_1d.as_deref(),
            key.0,
            key.1,
        )?;
        self.memo.insert(key, w);
        Ok(w)
    }
}

/// The comparison ratio at one state pair, `None` when a needed slice
/// is undefined.
fn grid_ratio(
    members: &mut [MemberDistances],
    mults: &[u32],
    measure: &GridMeasure,
    y: usize,
    z: usize,
) -> Result<Option<f64>, CertifyError> {
    let den = (measure.point(y) - measure.point(z)).norm_squared();
    let mut lhs = 0.0;
    for (member, &mult) in members.iter_mut().zip(mults) {
        match member.between(y, z, measure)? {
            Some(w) => lhs += f64::from(mult) * w,
            None => return Ok(None),
        }
    }
    Ok(Some(lhs / den))
}

/// Direct contractivity check.
///
/// Quadratic models take the exact operator-norm route. Finite models
/// enumerate every state pair when `C(states, 2)` fits `pair_budget`;
/// beyond that they fall back to seeded random pairs plus single-site
/// hill climbs, which only ever *under*-estimates the sup, so the
/// resulting certificate is flagged non-rigorous.
pub fn check_contractivity_def1(
    model: &Model,
    family: &PatchFamily,
    pair_budget: u64,
    seed: u64,
) -> Result<ContractivityOutcome, CertifyError> {
    let grid = match model {
        Model::Gaussian(g) => {
            return check_contractivity_def1_gaussian(&g.potential, family)
        }
        Model::Grid(g) => g,
    };
    let measure = &grid.measure;
    let states = measure.state_count();
    let t = family.min_coverage();
    let mut members = family
        .patches()
        .iter()
        .map(|p| MemberDistances::new(measure, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mults = family.multiplicities().to_vec();

    let total_pairs = states as u64 * (states as u64 - 1) / 2;
    let mut sup = 0.0f64;
    let mut worst = (0usize, 0usize);
    if total_pairs <= pair_budget {
        let mut skipped = 0u64;
        for y in 0..states {
            for z in y + 1..states {
                match grid_ratio(&mut members, &mults, measure, y, z)? {
                    Some(ratio) => {
                        if ratio > sup {
                            sup = ratio;
                            worst = (y, z);
                        }
                    }
                    None => skipped += 1,
                }
            }
        }
        return Ok(outcome_from_sup(
            sup,
            t,
            ContractivityMethod::Def1Exhaustive,
            ContractivityWitness::ExhaustivePairs {
                pairs: total_pairs,
                skipped,
                worst_y: measure.levels(worst.0),
                worst_z: measure.levels(worst.1),
            },
        ));
    }

    // Sampled phase: uniform pairs, then greedy single-site climbs.
    let mut rng = stream(seed, &[7]);
    let consider =
        |members: &mut [MemberDistances], y: usize, z: usize, sup: &mut f64, worst: &mut (usize, usize)| -> Result<f64, CertifyError> {
            let ratio = grid_ratio(members, &mults, measure, y, z)?.unwrap_or(f64::NEG_INFINITY);
            if ratio > *sup {
                *sup = ratio;
                *worst = (y, z);
            }
            Ok(ratio)
        };
    for _ in 0..pair_budget {
        let y = rng.gen_range(0..states);
        let z = rng.gen_range(0..states);
        if y == z {
            continue;
        }
        consider(&mut members, y, z, &mut sup, &mut worst)?;
    }
    let n = measure.site_count();
    for _ in 0..CLIMB_RESTARTS {
        let mut y = rng.gen_range(0..states);
        let mut z = rng.gen_range(0..states);
        if y == z {
            continue;
        }
        let mut current = consider(&mut members, y, z, &mut sup, &mut worst)?;
        for _ in 0..CLIMB_STEPS {
            let mut best: Option<(usize, usize, f64)> = None;
            for side in 0..2 {
                let base = if side == 0 { y } else { z };
                let mut levels = measure.levels(base);
                for site in 0..n {
                    let here = levels[site];
                    let axis_len = measure.axis(site).len();
                    for dir in [-1isize, 1] {
                        let moved = here as isize + dir;
                        if moved < 0 || moved as usize >= axis_len {
                            continue;
                        }
                        levels[site] = moved as usize;
                        let state = measure.flat(&levels);
                        levels[site] = here;
                        let (ny, nz) = if side == 0 { (state, z) } else { (y, state) };
                        if ny == nz {
                            continue;
                        }
                        let ratio = consider(&mut members, ny, nz, &mut sup, &mut worst)?;
                        if ratio > current && best.map_or(true, |(_, _, r)| ratio > r) {
                            best = Some((ny, nz, ratio));
                        }
                    }
                }
            }
            match best {
                Some((ny, nz, ratio)) => {
                    y = ny;
                    z = nz;
                    current = ratio;
                }
                None => break,
            }
        }
    }
    let mut outcome = outcome_from_sup(
        sup,
        t,
        ContractivityMethod::Def1Empirical,
        ContractivityWitness::SampledPairs {
            samples: pair_budget,
            restarts: CLIMB_RESTARTS,
            seed,
            worst_y: measure.levels(worst.0),
            worst_z: measure.levels(worst.1),
        },
    );
    if let ContractivityOutcome::Certified(cert) = &mut outcome {
        cert.rigorous = false;
    }
    Ok(outcome)
}

/// Deficiency via the influence matrix: the family sum is bounded by
/// `||A||^2 |y - z|^2` whenever per-site responses are, so
/// `delta = 1 - ||A||^2 / t`. Weaker than the direct sup but cheap,
/// and rigorous exactly when `A` itself was computed exactly.
pub fn certificate_from_matrix_a(
    matrices: &InfluenceMatrices,
    family: &PatchFamily,
) -> Result<ContractivityOutcome, CertifyError> {
    let a = matrices
        .a
        .as_ref()
        .ok_or(CertifyError::Unsupported("influence matrix A missing"))?;
    let norm = operator_norm(a)?;
    let mut outcome = outcome_from_sup(
        norm * norm,
        family.min_coverage(),
        ContractivityMethod::Def2Matrix,
        ContractivityWitness::OperatorNorm { norm },
    );
    if matrices.evaluation.starts_with("sampled") {
        if let ContractivityOutcome::Certified(cert) = &mut outcome {
            cert.rigorous = false;
        }
    }
    Ok(outcome)
}

/// Deficiency via the derivative matrix scaled by a transport
/// constant: `sup = ||B / rho||^2`, with `B` constant for quadratic
/// potentials and sampled over glued evaluation points otherwise.
pub fn check_theorem2(
    potential: &QuadraticPotential,
    family: &PatchFamily,
    rho: &RhoCertificate,
    search_budget: u64,
    seed: u64,
) -> Result<ContractivityOutcome, CertifyError> {
    if !(rho.rho > 0.0) {
        return Err(CertifyError::NonpositiveConvexity(rho.rho));
    }
    let n = potential.dim();
    let (norm_b, points) = if potential.has_perturbation() {
        let points = search_budget.max(1);
        let mut worst = 0.0f64;
        for p in 0..points {
            let mut rng = stream(seed, &[5, p]);
            let eta = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let m = matrix_b(potential, family, &eta, &y)?;
            worst = worst.max(operator_norm(m.b.as_ref().unwrap())?);
        }
        (worst, points)
    } else {
        let zero = DVector::zeros(n);
        let m = matrix_b(potential, family, &zero, &zero)?;
        (operator_norm(m.b.as_ref().unwrap())?, 1)
    };
    let scaled = norm_b / rho.rho;
    let mut outcome = outcome_from_sup(
        scaled * scaled,
        family.min_coverage(),
        ContractivityMethod::Theorem2Matrix,
        ContractivityWitness::MatrixBound {
            norm_b,
            rho: rho.rho,
            points,
        },
    );
    if potential.has_perturbation() || !rho.rigorous {
        if let ContractivityOutcome::Certified(cert) = &mut outcome {
            cert.rigorous = false;
        }
    }
    Ok(outcome)
}

/// Coefficient multiplying the divergence in the perturbed-measure
/// transport bound: `C^2 * (1 - (norm_b / rho)^2)^{-1} * (2 / rho)`.
/// Rejects `norm_b / rho` within `1e-9` of 1, where the geometric
/// series behind the bound stops converging.
pub fn corollary1_coefficient(rho: f64, norm_b: f64, c: f64) -> Result<f64, CertifyError> {
    if !(rho > 0.0) {
        return Err(CertifyError::NonpositiveConvexity(rho));
    }
    if !(norm_b >= 0.0 && norm_b.is_finite() && c > 0.0) {
        return Err(CertifyError::Unsupported(
            "norm must be nonnegative and the constant positive",
        ));
    }
    let ratio = norm_b / rho;
    if ratio >= 1.0 - CONTRACTION_GUARD {
        return Err(CertifyError::NotContractive { ratio });
    }
    Ok(c * c / (1.0 - ratio * ratio) * (2.0 / rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{dobrushin_matrix_a, rho_gaussian_conditionals};
    use crate::model::presets::{gaussian_chain, grid_two_site, lattice_precision, two_site};
    use crate::model::{build_patch_family, build_quadratic_potential, singleton_family};

    fn plain(j: DMatrix<f64>) -> QuadraticPotential {
        let n = j.nrows();
        build_quadratic_potential(j, DVector::zeros(n), None, None).unwrap()
    }

    #[test]
    fn independent_model_gets_the_full_deficiency() {
        let (model, family) = {
            let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
            (Model::gaussian(plain(j)).unwrap(), singleton_family(2))
        };
        let outcome = check_contractivity_def1(&model, &family, 0, 0).unwrap();
        let cert = outcome.certified().unwrap();
        assert_eq!(cert.delta, 1.0);
        assert_eq!(cert.method, ContractivityMethod::Def1Exact);
        assert!(cert.rigorous);
    }

    #[test]
    fn two_site_deficiency_is_exactly_three_quarters() {
        let (model, family) = two_site(0.5);
        let outcome = check_contractivity_def1(&model, &family, 0, 0).unwrap();
        let cert = outcome.certified().unwrap();
        assert!((cert.sup_ratio - 0.25).abs() < 1e-12);
        assert!((cert.delta - 0.75).abs() < 1e-12);
        match cert.witness {
            ContractivityWitness::OperatorNorm { norm } => {
                assert!((norm - 0.5).abs() < 1e-12)
            }
            _ => panic!("expected operator-norm witness"),
        }
    }

    #[test]
    fn strong_coupling_is_an_honest_failure() {
        // J = [[1, 1.2], [1.2, 1]] is indefinite: no joint measure
        // exists, but the conditionals do and their comparison sup is
        // 1.44 >= t = 1.
        let potential = plain(DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]));
        let outcome =
            check_contractivity_def1_gaussian(&potential, &singleton_family(2)).unwrap();
        match outcome {
            ContractivityOutcome::Failure(f) => {
                assert!((f.sup_ratio - 1.44).abs() < 1e-12);
                assert_eq!(f.t, 1);
            }
            ContractivityOutcome::Certified(_) => panic!("expected failure"),
        }
    }

    #[test]
    fn multiplicity_weights_the_comparison_sum() {
        // Patch {0} counted twice: the sup doubles that member's
        // contribution, ||G||^2 = 2 * 0.25.
        let (model, _) = two_site(0.5);
        let family = build_patch_family(2, &[(vec![0], 2), (vec![1], 1)]).unwrap();
        let outcome = check_contractivity_def1(&model, &family, 0, 0).unwrap();
        let cert = outcome.certified().unwrap();
        assert_eq!(cert.t, 1);
        assert!((cert.sup_ratio - 0.5).abs() < 1e-12);
        assert!((cert.delta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_grid_deficiency_reflects_the_quantized_response() {
        // The worst pairs differ by a single cell: the conditional mean
        // moves by `b h` and transporting a lattice measure by a
        // sub-cell shift costs about `shift * h`, so the per-member
        // ratio is `b h * h / h^2 = b` — not the smooth-pair `b^2`.
        // The exhaustive sup therefore sits near `b` and the deficiency
        // near `1 - b`, independent of the spacing `h`; the smooth
        // value `1 - b^2` is recovered only on well-separated pairs.
        let (model, family) = grid_two_site(0.5, 9, 3.0);
        let outcome = check_contractivity_def1(&model, &family, 10_000, 0).unwrap();
        let cert = outcome.certified().unwrap();
        assert_eq!(cert.method, ContractivityMethod::Def1Exhaustive);
        assert!(cert.rigorous);
        assert!(
            (cert.delta - 0.5).abs() < 0.06,
            "discrete delta {} vs quantized expectation 0.5",
            cert.delta
        );
        match &cert.witness {
            ContractivityWitness::ExhaustivePairs { pairs, skipped, .. } => {
                assert_eq!(*pairs, 81 * 80 / 2);
                assert_eq!(*skipped, 0);
            }
            _ => panic!("expected exhaustive witness"),
        }
    }

    #[test]
    fn sampled_search_stays_below_the_exhaustive_sup() {
        let (model, family) = grid_two_site(0.5, 9, 3.0);
        let exhaustive = check_contractivity_def1(&model, &family, 10_000, 0).unwrap();
        let sampled = check_contractivity_def1(&model, &family, 300, 11).unwrap();
        let exact = exhaustive.certified().unwrap();
        let est = sampled.certified().unwrap();
        assert_eq!(est.method, ContractivityMethod::Def1Empirical);
        assert!(!est.rigorous);
        assert!(est.sup_ratio <= exact.sup_ratio + 1e-12);
        // The climb should get close on a model this small.
        assert!(
            est.sup_ratio >= 0.8 * exact.sup_ratio,
            "sampled {} vs exhaustive {}",
            est.sup_ratio,
            exact.sup_ratio
        );
    }

    #[test]
    fn influence_bound_dominates_the_direct_sup() {
        let (model, family) = gaussian_chain(4, 0.2);
        let direct = check_contractivity_def1(&model, &family, 0, 0).unwrap();
        let matrices = dobrushin_matrix_a(&model, &family).unwrap();
        let via_a = certificate_from_matrix_a(&matrices, &family).unwrap();
        let d = direct.certified().unwrap();
        let a = via_a.certified().unwrap();
        assert_eq!(a.method, ContractivityMethod::Def2Matrix);
        assert!(d.sup_ratio <= a.sup_ratio + 1e-8);
        assert!(a.delta <= d.delta + 1e-12);
    }

    #[test]
    fn unit_diagonal_ties_the_direct_and_derivative_routes() {
        for (model, family) in [two_site(0.5), gaussian_chain(5, 0.2)] {
            let direct = check_contractivity_def1(&model, &family, 0, 0).unwrap();
            let rho = rho_gaussian_conditionals(&model, &family).unwrap();
            let potential = &model.as_gaussian().unwrap().potential;
            let thm2 = check_theorem2(potential, &family, &rho, 0, 0).unwrap();
            let g_norm = match direct.certified().unwrap().witness {
                ContractivityWitness::OperatorNorm { norm } => norm,
                _ => unreachable!(),
            };
            let b_norm = match thm2.certified().unwrap().witness {
                ContractivityWitness::MatrixBound { norm_b, .. } => norm_b,
                _ => unreachable!(),
            };
            // J_ii = 1 everywhere, so the stacked mean-shift matrix is
            // the off-diagonal block pattern of J itself.
            assert!(
                (g_norm - b_norm).abs() < 1e-8,
                "|G| = {g_norm} vs |B| = {b_norm}"
            );
        }
    }

    #[test]
    fn lattice_derivative_route_certifies_weak_coupling() {
        let potential = plain(lattice_precision(3, 3, 0.2));
        let family = singleton_family(9);
        let rho = RhoCertificate::exact(
            1.0,
            crate::certify::RhoKind::GaussianExact,
            "unit conditional precision".into(),
        );
        let outcome = check_theorem2(&potential, &family, &rho, 0, 0).unwrap();
        let cert = outcome.certified().unwrap();
        // ||B|| = 0.2 * 2 sqrt(2) (the largest adjacency eigenvalue of
        // the 3x3 grid graph), so sup = 0.32 and delta = 0.68.
        let adjacency_norm = 2.0 * std::f64::consts::SQRT_2;
        match cert.witness {
            ContractivityWitness::MatrixBound { norm_b, .. } => {
                assert!((norm_b - 0.2 * adjacency_norm).abs() < 1e-9)
            }
            _ => panic!("expected matrix-bound witness"),
        }
        assert!((cert.delta - 0.68).abs() < 1e-9, "delta = {}", cert.delta);
    }

    #[test]
    fn lattice_derivative_route_fails_at_strong_coupling() {
        let potential = plain(lattice_precision(3, 3, 0.6));
        let family = singleton_family(9);
        let rho = RhoCertificate::exact(
            1.0,
            crate::certify::RhoKind::GaussianExact,
            "unit conditional precision".into(),
        );
        let outcome = check_theorem2(&potential, &family, &rho, 0, 0).unwrap();
        match outcome {
            ContractivityOutcome::Failure(f) => {
                assert!((f.sup_ratio - 2.88).abs() < 1e-9, "sup = {}", f.sup_ratio);
            }
            ContractivityOutcome::Certified(_) => panic!("expected failure"),
        }
    }

    #[test]
    fn weak_nearest_neighbour_coupling_always_certifies() {
        // Sufficient criterion for the lattice: 2 d J < rho. For the
        // 3x3 box d = 2, rho = 1, so every c below 0.25 must pass.
        let family = singleton_family(9);
        let rho = RhoCertificate::exact(
            1.0,
            crate::certify::RhoKind::GaussianExact,
            "unit conditional precision".into(),
        );
        for c in [0.05, 0.1, 0.2, 0.24] {
            let potential = plain(lattice_precision(3, 3, c));
            let outcome = check_theorem2(&potential, &family, &rho, 0, 0).unwrap();
            assert!(
                outcome.certified().is_some(),
                "coupling {c} should certify"
            );
        }
    }

    #[test]
    fn coefficient_examples() {
        let c = 2.0;
        assert!((corollary1_coefficient(1.0, 0.0, c).unwrap() - 2.0 * c * c).abs() < 1e-12);
        let damped = corollary1_coefficient(1.0, 0.5, c).unwrap();
        assert!((damped - 2.0 * c * c / 0.75).abs() < 1e-12);
        assert!(matches!(
            corollary1_coefficient(1.0, 1.0 - 1e-12, c),
            Err(CertifyError::NotContractive { .. })
        ));
        assert!(matches!(
            corollary1_coefficient(1.0, 2.0, c),
            Err(CertifyError::NotContractive { .. })
        ));
    }
}
