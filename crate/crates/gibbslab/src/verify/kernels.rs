//! Sweep-level pipelines: the averaged kernel's transport bound, its
//! single-sweep contraction, and the iterated geometric envelope.

use rand::Rng;

use crate::certify::{ContractivityCertificate, RhoCertificate};
use crate::gibbs::{simulate_coupled_chain, GridKernel};
use crate::model::{GridMeasure, Measure, Model, PatchFamily};
use crate::rng::stream;
use crate::transport::w2_sq_grid;

use super::{delta_label, rho_label, InequalityId, RunContext, VerificationReport, VerifyError};

/// Contraction factor of one averaged sweep under a certificate, with
/// the family the certificate must have been issued for.
fn sweep_factor(
    delta: &ContractivityCertificate,
    family: &PatchFamily,
) -> Result<f64, VerifyError> {
    if delta.t != family.min_coverage() {
        return Err(VerifyError::Unsupported(
            "contractivity certificate coverage does not match the patch family",
        ));
    }
    Ok(1.0 - f64::from(delta.t) * delta.delta / f64::from(family.total()))
}

/// Transport cost of `M` averaged sweeps against the initial
/// divergence: for each trial `p` and each `M` in `m_list`,
/// `W^2(p, p G^M) <= (M/N) v (2/rho) D(p || q)`.
///
/// Exact throughout (tensor sweeps and transport LP), so this runs in
/// discrete mode only. An infinite divergence makes the bound vacuous;
/// the report then passes with its `vacuous` flag set.
pub fn verify_aux_theorem(
    model: &Model,
    family: &PatchFamily,
    rho: &RhoCertificate,
    trial_ps: &[GridMeasure],
    m_list: &[usize],
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let q = &model.as_grid()?.measure;
    let kernel = GridKernel::new(model, family)?;
    let n_total = f64::from(family.total());
    let v = f64::from(family.max_coverage());
    let max_m = m_list.iter().copied().max().unwrap_or(0);

    let mut reports = Vec::with_capacity(trial_ps.len() * m_list.len());
    let mut trial = 0u64;
    for p in trial_ps {
        if !p.same_support(q) {
            return Err(VerifyError::Unsupported(
                "trial measure must share the model grid",
            ));
        }
        let divergence = crate::divergence::kl_grid(p, q)?;
        // All sweep powers of this trial, computed incrementally.
        let mut powers = Vec::with_capacity(max_m + 1);
        powers.push(p.clone());
        for m in 1..=max_m {
            let next = kernel.apply(&powers[m - 1])?;
            powers.push(next);
        }
        for &m in m_list {
            let lhs = w2_sq_grid(p, &powers[m])?.cost;
            let rhs = (m as f64 / n_total) * v * (2.0 / rho.rho) * divergence;
            reports.push(VerificationReport::build(
                InequalityId::SweepTransport,
                lhs,
                rhs,
                ctx.tolerances.exact(InequalityId::SweepTransport),
                ctx.meta(trial),
                vec![rho_label(rho), format!("M={m}")],
                rho.rigorous,
            ));
            trial += 1;
        }
    }
    Ok(reports)
}

/// Single-sweep contraction: `W^2(p G, r G) <= (1 - t delta / N)
/// W^2(p, r)` for each trial pair.
///
/// Grid pairs are evaluated exactly (tensor sweep plus transport LP).
/// Gaussian pairs cannot materialize `p G` (a Gaussian mixture), so the
/// left side is replaced by the coupled-simulation moment
/// `E|X(1) - Y(1)|^2` — an upper bound on it — and the right side by
/// the matching moment of the starts; the tolerance widens to the
/// Monte Carlo policy with both standard errors combined.
pub fn verify_prop2(
    model: &Model,
    family: &PatchFamily,
    delta: &ContractivityCertificate,
    pairs: &[(Measure, Measure)],
    mc_trials: u64,
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let factor = sweep_factor(delta, family)?;
    let grid_kernel = match model {
        Model::Grid(_) => Some(GridKernel::new(model, family)?),
        Model::Gaussian(_) => None,
    };
    let mut reports = Vec::with_capacity(pairs.len());
    for (i, (p, r)) in pairs.iter().enumerate() {
        let report = match (p, r) {
            (Measure::Grid(p), Measure::Grid(r)) => {
                let kernel = grid_kernel.as_ref().ok_or(VerifyError::Unsupported(
                    "grid trial pairs need a grid model",
                ))?;
                let lhs = w2_sq_grid(&kernel.apply(p)?, &kernel.apply(r)?)?.cost;
                let rhs = factor * w2_sq_grid(p, r)?.cost;
                VerificationReport::build(
                    InequalityId::SweepContraction,
                    lhs,
                    rhs,
                    ctx.tolerances.exact(InequalityId::SweepContraction),
                    ctx.meta(i as u64),
                    vec![delta_label(delta), "exact transport".into()],
                    delta.rigorous,
                )
            }
            _ => {
                let master_seed: u64 = stream(ctx.seed, &[8, i as u64]).gen();
                let stats =
                    simulate_coupled_chain(model, family, p, r, 1, mc_trials, master_seed)?;
                let lhs = stats.mean_sq_dist[1];
                let rhs = factor * stats.mean_sq_dist[0];
                let stderr =
                    (stats.stderr[1].powi(2) + (factor * stats.stderr[0]).powi(2)).sqrt();
                VerificationReport::build(
                    InequalityId::SweepContraction,
                    lhs,
                    rhs,
                    ctx.tolerances
                        .monte_carlo(InequalityId::SweepContraction, stderr),
                    ctx.meta(i as u64),
                    vec![
                        delta_label(delta),
                        format!("monte-carlo ({mc_trials} trials)"),
                    ],
                    delta.rigorous,
                )
            }
        };
        reports.push(report);
    }
    Ok(reports)
}

/// Iterated sweeps against the geometric envelope:
/// `W^2(p G^m, q) <= (1 - t delta / N)^m W^2(p, q)` for `m = 0..=m_max`.
/// Exact throughout, so discrete mode only; `m = 0` is the equality
/// anchor.
pub fn verify_corollary2(
    model: &Model,
    family: &PatchFamily,
    delta: &ContractivityCertificate,
    p: &GridMeasure,
    m_max: usize,
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let q = &model.as_grid()?.measure;
    if !p.same_support(q) {
        return Err(VerifyError::Unsupported(
            "trial measure must share the model grid",
        ));
    }
    let factor = sweep_factor(delta, family)?;
    let kernel = GridKernel::new(model, family)?;
    let w0 = w2_sq_grid(p, q)?.cost;

    let mut reports = Vec::with_capacity(m_max + 1);
    let mut current = p.clone();
    for m in 0..=m_max {
        let lhs = if m == 0 {
            w0
        } else {
            w2_sq_grid(&current, q)?.cost
        };
        reports.push(VerificationReport::build(
            InequalityId::GeometricDecay,
            lhs,
            factor.powi(m as i32) * w0,
            ctx.tolerances.exact(InequalityId::GeometricDecay),
            ctx.meta(m as u64),
            vec![delta_label(delta), format!("m={m}")],
            delta.rigorous,
        ));
        if m < m_max {
            current = kernel.apply(&current)?;
        }
    }
    Ok(reports)
}
