//! `gibbslab verify`: run the selected inequality suites against the
//! configured model and write the report files.
//!
//! Trial inputs are drawn from counter-based streams rooted at the
//! master seed; the path prefixes here (32..=38) are disjoint from the
//! prefixes the library reserves for its own internal draws, so suite
//! trials never alias certification trials.

use std::collections::BTreeSet;
use std::str::FromStr;

use gibbslab::certify::{CertifyError, ContractivityCertificate, RhoCertificate};
use gibbslab::gibbs::interpolation_chain;
use gibbslab::model::{BuiltModel, GaussianMeasure, GridMeasure, Measure, Model};
use gibbslab::rng::stream;
use gibbslab::verify::{
    concentration_constant, summary_csv, verify_aux_theorem, verify_concentration,
    verify_corollary1, verify_corollary2, verify_lemma1_and_step, verify_prop2, verify_theorem1,
    verify_theorem2_bridge, InequalityId, RunContext, ToleranceTable, VerificationReport,
    VerifyError, ALL_IDS,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::certify_cmd::{self, CertificatesFile};
use crate::output::write_atomic;
use crate::{load_config, CliError, VerifyArgs};

/// Monte Carlo trajectories behind each Gaussian-mode sweep contraction
/// report.
const MC_SWEEP_TRIALS: u64 = 20_000;
/// Hill-climb restarts appended to the Gaussian distance-divergence
/// suite.
const CLIMB_RESTARTS: u64 = 8;

pub fn run(args: &VerifyArgs) -> Result<i32, CliError> {
    let built = load_config(&args.common.config)?;
    let tolerances = match &args.tolerance_overrides {
        Some(text) => ToleranceTable::from_json(text)
            .map_err(|e| CliError::Config(format!("--tolerance-overrides: {e}")))?,
        None => ToleranceTable::default(),
    };
    let suites = resolve_suites(&args.suite, &built.model)?;
    let ctx = RunContext::new(built.config_hash.clone(), args.common.seed, tolerances);

    let certificates = certify_cmd::assemble(&built, 400, args.common.seed)?;
    let reports = run_suites(&built, &suites, &certificates, args, &ctx)?;

    let mut jsonl = String::new();
    for report in &reports {
        jsonl.push_str(&report.to_json_line());
        jsonl.push('\n');
    }
    write_atomic(&args.common.out, "reports.jsonl", &jsonl)?;
    write_atomic(&args.common.out, "summary.csv", &summary_csv(&reports))?;
    write_atomic(
        &args.common.out,
        "certificates.json",
        &certify_cmd::render_json(&certificates),
    )?;

    let mut all_pass = true;
    for id in ALL_IDS {
        let rows: Vec<&VerificationReport> = reports.iter().filter(|r| r.id == id).collect();
        if rows.is_empty() {
            continue;
        }
        let passes = rows.iter().filter(|r| r.pass).count();
        let min_margin = rows
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min);
        all_pass &= passes == rows.len();
        println!(
            "{}: {}/{} passed (min margin {:e})",
            id.as_str(),
            passes,
            rows.len(),
            min_margin
        );
    }
    println!(
        "verdict: {} ({} reports)",
        if all_pass { "PASS" } else { "FAIL" },
        reports.len()
    );
    Ok(if all_pass { 0 } else { 1 })
}

/// The suites a model's mode can run. The chain suites and the sweep
/// contraction run in both modes; the exact-tensor suites need a grid;
/// the perturbed-lattice corollary needs a Gaussian; the gradient
/// bridge needs an exactly quadratic potential.
fn applicable(model: &Model) -> Vec<InequalityId> {
    let quadratic = match model {
        Model::Gaussian(g) => !g.potential.has_perturbation(),
        Model::Grid(g) => g
            .potential
            .as_ref()
            .is_some_and(|p| !p.has_perturbation()),
    };
    let mut ids = vec![
        InequalityId::StepTransport,
        InequalityId::ChainAggregate,
        InequalityId::SweepContraction,
        InequalityId::DistanceDivergence,
        InequalityId::ChainTelescope,
    ];
    match model {
        Model::Gaussian(_) => ids.push(InequalityId::PerturbedLattice),
        Model::Grid(_) => ids.extend([
            InequalityId::SweepTransport,
            InequalityId::GeometricDecay,
            InequalityId::Concentration,
        ]),
    }
    if quadratic {
        ids.push(InequalityId::GradientBridge);
    }
    ids
}

fn resolve_suites(
    requested: &[String],
    model: &Model,
) -> Result<BTreeSet<InequalityId>, CliError> {
    let available: BTreeSet<InequalityId> = applicable(model).into_iter().collect();
    if requested.is_empty() {
        return Ok(available);
    }
    let mut selected = BTreeSet::new();
    for name in requested {
        let id = InequalityId::from_str(name).map_err(CliError::Config)?;
        if !available.contains(&id) {
            return Err(CliError::Config(format!(
                "suite {} is not available for {} models",
                id.as_str(),
                certify_cmd::mode_name(model)
            )));
        }
        selected.insert(id);
    }
    Ok(selected)
}

fn verify_err(e: VerifyError) -> CliError {
    match &e {
        VerifyError::Certify(CertifyError::NotContractive { .. })
        | VerifyError::NotContractive(_) => CliError::Certification(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

/// A flat-Dirichlet draw on the grid's states: positive everywhere,
/// rough at every scale.
fn dirichlet(q: &GridMeasure, rng: &mut impl Rng) -> Result<GridMeasure, CliError> {
    let weights: Vec<f64> = (0..q.state_count())
        .map(|_| -rng.gen_range(1e-12..1.0f64).ln())
        .collect();
    q.with_probs(weights)
        .map_err(|e| CliError::Config(e.to_string()))
}

/// A random nondegenerate Gaussian near the stationary law: shifted
/// mean, per-coordinate rescaled covariance.
fn random_gaussian(q: &GaussianMeasure, rng: &mut impl Rng) -> Result<GaussianMeasure, CliError> {
    let n = q.dim();
    let mean = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let scales = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| {
        rng.gen_range(-0.5..0.5f64).exp()
    }));
    let cov = &scales * q.cov() * &scales;
    GaussianMeasure::new(mean, cov).map_err(|e| CliError::Config(e.to_string()))
}

fn random_measure(model: &Model, rng: &mut impl Rng) -> Result<Measure, CliError> {
    match model {
        Model::Gaussian(g) => Ok(Measure::Gaussian(random_gaussian(&g.measure, rng)?)),
        Model::Grid(g) => Ok(Measure::Grid(dirichlet(&g.measure, rng)?)),
    }
}

fn need_delta<'a>(
    certificates: &'a CertificatesFile,
    id: InequalityId,
) -> Result<&'a ContractivityCertificate, CliError> {
    certificates.delta.as_ref().ok_or_else(|| {
        CliError::Certification(format!(
            "suite {} needs a contractivity certificate, but certification failed (sup ratio {:.6})",
            id.as_str(),
            certificates
                .failure
                .as_ref()
                .map(|f| f.sup_ratio)
                .unwrap_or(f64::NAN)
        ))
    })
}

fn run_suites(
    built: &BuiltModel,
    suites: &BTreeSet<InequalityId>,
    certificates: &CertificatesFile,
    args: &VerifyArgs,
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, CliError> {
    let model = &built.model;
    let family = &built.family;
    let rho: &RhoCertificate = &certificates.rho;
    let trials = args.trials;
    let steps = args.steps.max(1);
    let mut reports = Vec::new();

    // Chain suites: one interpolation chain per trial, reports filtered
    // to the requested ids.
    let chain_ids = [
        InequalityId::StepTransport,
        InequalityId::ChainAggregate,
        InequalityId::ChainTelescope,
    ];
    if chain_ids.iter().any(|id| suites.contains(id)) {
        let members = family.patches().len();
        for trial in 0..trials {
            let mut rng = stream(ctx.seed, &[32, trial]);
            let p = random_measure(model, &mut rng)?;
            let seq: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..members)).collect();
            let trace =
                interpolation_chain(model, family, &p, &seq).map_err(|e| {
                    CliError::Config(format!("interpolation chain: {e}"))
                })?;
            reports.extend(
                verify_lemma1_and_step(family, &trace, rho, ctx)
                    .into_iter()
                    .filter(|r| suites.contains(&r.id)),
            );
        }
    }

    if suites.contains(&InequalityId::SweepTransport) {
        let q = &model.as_grid().map_err(|e| CliError::Config(e.to_string()))?.measure;
        let mut ps = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let mut rng = stream(ctx.seed, &[34, trial]);
            ps.push(dirichlet(q, &mut rng)?);
        }
        let m_list: Vec<usize> = (1..=steps).collect();
        reports.extend(
            verify_aux_theorem(model, family, rho, &ps, &m_list, ctx).map_err(verify_err)?,
        );
    }

    if suites.contains(&InequalityId::SweepContraction) {
        let delta = need_delta(certificates, InequalityId::SweepContraction)?;
        let mut pairs = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let mut rng = stream(ctx.seed, &[33, trial]);
            pairs.push((random_measure(model, &mut rng)?, random_measure(model, &mut rng)?));
        }
        reports.extend(
            verify_prop2(model, family, delta, &pairs, MC_SWEEP_TRIALS, ctx)
                .map_err(verify_err)?,
        );
    }

    if suites.contains(&InequalityId::GeometricDecay) {
        let delta = need_delta(certificates, InequalityId::GeometricDecay)?;
        let q = &model.as_grid().map_err(|e| CliError::Config(e.to_string()))?.measure;
        let mut rng = stream(ctx.seed, &[35]);
        let p = dirichlet(q, &mut rng)?;
        reports.extend(
            verify_corollary2(model, family, delta, &p, steps, ctx).map_err(verify_err)?,
        );
    }

    if suites.contains(&InequalityId::DistanceDivergence) {
        let delta = need_delta(certificates, InequalityId::DistanceDivergence)?;
        let mut ps = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let mut rng = stream(ctx.seed, &[36, trial]);
            ps.push(random_measure(model, &mut rng)?);
        }
        reports.extend(
            verify_theorem1(model, family, rho, delta, &ps, CLIMB_RESTARTS, ctx)
                .map_err(verify_err)?,
        );
    }

    if suites.contains(&InequalityId::GradientBridge) {
        let potential = match model {
            Model::Gaussian(g) => &g.potential,
            Model::Grid(g) => g.potential.as_ref().ok_or(CliError::Config(
                "gradient bridge needs a potential-backed model".into(),
            ))?,
        };
        reports.extend(
            verify_theorem2_bridge(potential, family, rho, trials, ctx).map_err(verify_err)?,
        );
    }

    if suites.contains(&InequalityId::PerturbedLattice) {
        let g = model.as_gaussian().map_err(|e| CliError::Config(e.to_string()))?;
        let mut off = g.potential.j().clone();
        for i in 0..off.nrows() {
            off[(i, i)] = 0.0;
        }
        let norm_b = gibbslab::certify::operator_norm(&off)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut ps = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let mut rng = stream(ctx.seed, &[37, trial]);
            ps.push(random_gaussian(&g.measure, &mut rng)?);
        }
        reports.extend(
            verify_corollary1(model, rho, norm_b, &ps, ctx).map_err(verify_err)?,
        );
    }

    if suites.contains(&InequalityId::Concentration) {
        let delta = need_delta(certificates, InequalityId::Concentration)?;
        let c = concentration_constant(
            family.max_coverage(),
            family.min_coverage(),
            delta.delta,
            rho.rho,
        )
        .map_err(verify_err)?;
        let pairs = tail_pairs(model)?;
        let rigorous = rho.rigorous && delta.rigorous;
        reports.extend(
            verify_concentration(model, &pairs, c, rigorous, ctx).map_err(verify_err)?,
        );
    }

    Ok(reports)
}

/// Deterministic tail-set pairs for the two-set concentration suite:
/// per coordinate (up to the first two), the lower and upper quartile
/// tails of the grid.
fn tail_pairs(model: &Model) -> Result<Vec<(Vec<usize>, Vec<usize>)>, CliError> {
    let q = &model.as_grid().map_err(|e| CliError::Config(e.to_string()))?.measure;
    let mut pairs = Vec::new();
    for coord in 0..q.site_count().min(2) {
        let mut values: Vec<f64> = (0..q.state_count()).map(|s| q.point(s)[coord]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("grid coordinates are finite"));
        values.dedup();
        if values.len() < 4 {
            continue;
        }
        let lo = values[values.len() / 4];
        let hi = values[3 * values.len() / 4];
        let a: Vec<usize> = (0..q.state_count())
            .filter(|&s| q.point(s)[coord] <= lo)
            .collect();
        let b: Vec<usize> = (0..q.state_count())
            .filter(|&s| q.point(s)[coord] >= hi)
            .collect();
        if !a.is_empty() && !b.is_empty() {
            pairs.push((a, b));
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Config(
            "concentration suite: the grid is too small to form tail pairs".into(),
        ));
    }
    Ok(pairs)
}
