//! Distance–divergence pipelines: the headline transport bound, its
//! gradient-form bridge to the contractivity sup, and the
//! perturbed-lattice corollary.
//!
//! All three share a shape: certificates assemble a coefficient, trial
//! measures supply `(lhs, rhs)` pairs, and every pair becomes one
//! report. The headline bound additionally hunts for its own worst case
//! over Gaussian trial measures with a coordinate hill-climb, reported
//! one line per restart.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::certify::{
    check_theorem2, corollary1_coefficient, ContractivityCertificate, ContractivityOutcome,
    RhoCertificate,
};
use crate::divergence::{kl_gaussian, kl_grid};
use crate::model::{
    gaussian_conditional_from_precision, submatrix, subvector, GaussianMeasure, Measure, Model,
    PatchFamily, QuadraticPotential,
};
use crate::rng::stream;
use crate::transport::{w2_sq_gaussian, w2_sq_grid};

use super::constants::constant_c;
use super::{delta_label, rho_label, InequalityId, RunContext, VerificationReport, VerifyError};

/// Cap on hill-climb sweeps per restart; each sweep tries every
/// coordinate in both directions before the step halves.
const CLIMB_SWEEPS: usize = 80;
/// Initial hill-climb step, halved on sweeps with no improvement.
const CLIMB_STEP0: f64 = 0.5;
/// The climb stops once the step falls below this.
const CLIMB_STEP_MIN: f64 = 1e-3;

/// Assembles the distance–divergence coefficient
/// `C * sqrt((v/t) * (1/delta) * (2/rho))` from its certificates,
/// validating that the contractivity certificate was issued for this
/// family's coverage.
fn theorem1_coefficient(
    family: &PatchFamily,
    rho: &RhoCertificate,
    delta: &ContractivityCertificate,
) -> Result<f64, VerifyError> {
    if delta.t != family.min_coverage() {
        return Err(VerifyError::Unsupported(
            "contractivity certificate coverage does not match the patch family",
        ));
    }
    if !(delta.delta > 0.0) {
        return Err(VerifyError::NotContractive(delta.delta));
    }
    if !(rho.rho > 0.0) {
        return Err(VerifyError::Unsupported(
            "transport certificate must carry a positive constant",
        ));
    }
    let v = f64::from(family.max_coverage());
    let t = f64::from(delta.t);
    Ok(constant_c() * ((v / t) * (1.0 / delta.delta) * (2.0 / rho.rho)).sqrt())
}

/// Evaluates one Gaussian trial for the headline bound. The trial is
/// parameterized as `N(mean, S * cov_q * S)` with `S = diag(exp(logs))`,
/// which stays positive definite for every parameter value. Returns
/// `None` when the trial coincides with the model (the ratio is 0/0
/// there, and the bound is trivial anyway).
fn theorem1_gaussian_trial(
    q: &GaussianMeasure,
    coefficient: f64,
    mean: &DVector<f64>,
    logs: &DVector<f64>,
) -> Result<Option<(f64, f64, f64)>, VerifyError> {
    let n = q.dim();
    let scale = logs.map(f64::exp);
    let cov = DMatrix::from_fn(n, n, |i, j| scale[i] * scale[j] * q.cov()[(i, j)]);
    let p = match GaussianMeasure::new(mean.clone(), cov) {
        Ok(p) => p,
        Err(_) => return Ok(None),
    };
    let lhs = w2_sq_gaussian(&p, q)?.sqrt();
    let divergence = kl_gaussian(&p, q)?;
    let rhs = coefficient * divergence.sqrt();
    if !(rhs > 0.0) {
        return Ok(None);
    }
    Ok(Some((lhs / rhs, lhs, rhs)))
}

/// The distance–divergence bound: for each trial `p`,
/// `W(p, q) <= C * sqrt((v/t) * (1/delta) * (2/rho) * D(p || q))`
/// with `C` from [`constant_c`]. Note the *unsquared* transport cost on
/// the left.
///
/// Gaussian models evaluate both sides in closed form and afterwards
/// run `climb_restarts` coordinate hill-climbs over the trial mean and
/// per-site covariance scales, maximizing `lhs / rhs`; each restart
/// contributes one report for the worst trial it found, labeled
/// `hill-climb` and numbered after the supplied trials. Discrete models
/// evaluate the supplied trials only (transport LP plus exact
/// divergence); the climb parameterization is Gaussian and does not
/// transfer.
///
/// An infinite divergence makes the bound vacuous; the report then
/// passes with its `vacuous` flag set.
pub fn verify_theorem1(
    model: &Model,
    family: &PatchFamily,
    rho: &RhoCertificate,
    delta: &ContractivityCertificate,
    trial_ps: &[Measure],
    climb_restarts: u64,
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let coefficient = theorem1_coefficient(family, rho, delta)?;
    let rigorous = rho.rigorous && delta.rigorous;
    let labels = || vec![rho_label(rho), delta_label(delta)];
    let tolerance = ctx.tolerances.exact(InequalityId::DistanceDivergence);

    let mut reports = Vec::with_capacity(trial_ps.len() + climb_restarts as usize);
    for (i, p) in trial_ps.iter().enumerate() {
        let (lhs, divergence) = match model {
            Model::Gaussian(gm) => {
                let p = p.as_gaussian()?;
                (w2_sq_gaussian(p, &gm.measure)?.sqrt(), kl_gaussian(p, &gm.measure)?)
            }
            Model::Grid(gm) => {
                let p = p.as_grid()?;
                if !p.same_support(&gm.measure) {
                    return Err(VerifyError::Unsupported(
                        "trial measure must share the model grid",
                    ));
                }
                (w2_sq_grid(p, &gm.measure)?.cost.sqrt(), kl_grid(p, &gm.measure)?)
            }
        };
        let rhs = coefficient * divergence.sqrt();
        reports.push(VerificationReport::build(
            InequalityId::DistanceDivergence,
            lhs,
            rhs,
            tolerance,
            ctx.meta(i as u64),
            labels(),
            rigorous,
        ));
    }

    if let Model::Gaussian(gm) = model {
        let q = &gm.measure;
        let n = q.dim();
        for r in 0..climb_restarts {
            let mut rng = stream(ctx.seed, &[9, r]);
            // Redraw the start on the measure-zero chance it lands
            // exactly on the model.
            let mut state = None;
            for _ in 0..8 {
                let mean = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
                let logs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                if let Some(triple) = theorem1_gaussian_trial(q, coefficient, &mean, &logs)? {
                    state = Some((mean, logs, triple));
                    break;
                }
            }
            let Some((mut mean, mut logs, (mut ratio, mut lhs, mut rhs))) = state else {
                continue;
            };
            let mut step = CLIMB_STEP0;
            for _ in 0..CLIMB_SWEEPS {
                if step < CLIMB_STEP_MIN {
                    break;
                }
                let mut improved = false;
                for coord in 0..2 * n {
                    for sign in [1.0, -1.0] {
                        let mut mean2 = mean.clone();
                        let mut logs2 = logs.clone();
                        if coord < n {
                            mean2[coord] += sign * step;
                        } else {
                            logs2[coord - n] += sign * step;
                        }
                        if let Some((r2, l2, h2)) =
                            theorem1_gaussian_trial(q, coefficient, &mean2, &logs2)?
                        {
                            if r2 > ratio + 1e-12 {
                                mean = mean2;
                                logs = logs2;
                                (ratio, lhs, rhs) = (r2, l2, h2);
                                improved = true;
                            }
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            let mut labels = labels();
            labels.push("hill-climb".into());
            reports.push(VerificationReport::build(
                InequalityId::DistanceDivergence,
                lhs,
                rhs,
                tolerance,
                ctx.meta(trial_ps.len() as u64 + r),
                labels,
                rigorous,
            ));
        }
    }
    Ok(reports)
}

/// The gradient bridge: for sampled pairs `(x, y)`, the summed
/// transport costs between patch conditionals are bounded through the
/// potential's gradient increments,
/// `sum_I W^2(Q_I(. | x), Q_I(. | y)) <= (1/rho^2) * sum_I |J_{I,C} (x - y)_C|^2`,
/// and — when the derivative-matrix route certifies the model — by
/// `t * (1 - delta) * |x - y|^2` against that certificate.
///
/// Quadratic potentials make both sides closed-form: conditionals are
/// Gaussian with covariances independent of the boundary, so each
/// transport cost is a squared mean shift, and the gradient increment
/// at glued configurations is boundary-linear with the patch rows of
/// `J`. Single-site perturbations are rejected: the gradient side would
/// still cancel, but the conditional transport costs stop being mean
/// shifts.
///
/// Emits two reports per pair (one per bound) when the certificate
/// exists, otherwise just the gradient-form report.
pub fn verify_theorem2_bridge(
    potential: &QuadraticPotential,
    family: &PatchFamily,
    rho: &RhoCertificate,
    pair_budget: u64,
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, VerifyError> {
    if potential.has_perturbation() {
        return Err(VerifyError::Unsupported(
            "gradient bridge needs exactly quadratic potentials",
        ));
    }
    let n = potential.dim();
    let certificate = match check_theorem2(potential, family, rho, 1, ctx.seed)? {
        ContractivityOutcome::Certified(cert) => Some(cert),
        ContractivityOutcome::Failure(_) => None,
    };

    // Per member: the conditional law (for mean shifts) and the
    // boundary rows of the potential matrix (for gradient increments).
    let mut members = Vec::with_capacity(family.patches().len());
    for patch in family.patches() {
        let conditional = gaussian_conditional_from_precision(potential, patch)?;
        let j_block = submatrix(potential.j(), patch.sites(), &conditional.boundary_sites);
        members.push((conditional, j_block));
    }

    let gradient_tolerance = ctx.tolerances.exact(InequalityId::GradientBridge);
    let mut reports = Vec::new();
    for i in 0..pair_budget {
        let mut rng = stream(ctx.seed, &[10, i]);
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let difference = &x - &y;

        let mut lhs = 0.0;
        let mut gradient_sum = 0.0;
        for (conditional, j_block) in &members {
            lhs += (conditional.mean_given(&x) - conditional.mean_given(&y)).norm_squared();
            gradient_sum +=
                (j_block * subvector(&difference, &conditional.boundary_sites)).norm_squared();
        }
        let rhs = gradient_sum / (rho.rho * rho.rho);
        reports.push(VerificationReport::build(
            InequalityId::GradientBridge,
            lhs,
            rhs,
            gradient_tolerance,
            ctx.meta(i),
            vec![rho_label(rho), "gradient-form".into()],
            rho.rigorous,
        ));

        if let Some(cert) = &certificate {
            let rhs = f64::from(cert.t) * (1.0 - cert.delta) * difference.norm_squared();
            reports.push(VerificationReport::build(
                InequalityId::GradientBridge,
                lhs,
                rhs,
                gradient_tolerance,
                ctx.meta(i),
                vec![delta_label(cert), "certificate-consistency".into()],
                cert.rigorous,
            ));
        }
    }
    Ok(reports)
}

/// The perturbed-lattice transport bound: for Gaussian trial measures,
/// `W^2(p, q) <= C^2 * (1 - |B/rho|^2)^{-1} * (2/rho) * D(p || q)`,
/// with the coefficient from [`corollary1_coefficient`] and `C` from
/// [`constant_c`]. Rejects interaction norms at or above the transport
/// constant (the geometric series behind the bound stops converging).
pub fn verify_corollary1(
    model: &Model,
    rho: &RhoCertificate,
    norm_b: f64,
    trial_ps: &[GaussianMeasure],
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let q = &model.as_gaussian()?.measure;
    let coefficient = corollary1_coefficient(rho.rho, norm_b, constant_c())?;
    let tolerance = ctx.tolerances.exact(InequalityId::PerturbedLattice);
    let mut reports = Vec::with_capacity(trial_ps.len());
    for (i, p) in trial_ps.iter().enumerate() {
        let lhs = w2_sq_gaussian(p, q)?;
        let rhs = coefficient * kl_gaussian(p, q)?;
        reports.push(VerificationReport::build(
            InequalityId::PerturbedLattice,
            lhs,
            rhs,
            tolerance,
            ctx.meta(i as u64),
            vec![rho_label(rho), format!("interaction norm {norm_b}")],
            rho.rigorous,
        ));
    }
    Ok(reports)
}
