//! `gibbslab certify`: build the model, certify its constants, report.

use gibbslab::certify::{
    check_contractivity_def1, dobrushin_matrix_a, matrix_b, operator_norm, rho_empirical_family,
    rho_gaussian_conditionals, ContractivityCertificate, ContractivityFailure,
    ContractivityOutcome, RhoCertificate,
};
use gibbslab::model::{BuiltModel, Model, PatchFamily, QuadraticPotential};
use nalgebra::DVector;
use serde::Serialize;

use crate::output::write_atomic;
use crate::{load_config, CertifyArgs, CliError};

/// Everything `certificates.json` holds. Serialization order is the
/// struct order, so reruns are byte-identical.
#[derive(Serialize)]
pub struct CertificatesFile {
    pub config_hash: String,
    pub mode: &'static str,
    pub family: FamilyStats,
    pub rho: RhoCertificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<ContractivityCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<ContractivityFailure>,
    pub matrix_norms: MatrixNorms,
}

#[derive(Serialize)]
pub struct FamilyStats {
    pub sites: usize,
    pub members: usize,
    /// Multiplicity-weighted member count `N`.
    pub total: u32,
    /// Minimum site coverage `t`.
    pub min_coverage: u32,
    /// Maximum site coverage `v`.
    pub max_coverage: u32,
}

#[derive(Serialize)]
pub struct MatrixNorms {
    /// Operator norm of the patch influence matrix `A`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Operator norm of the stacked cross-derivative matrix `B`
    /// (quadratic potentials only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

pub fn mode_name(model: &Model) -> &'static str {
    match model {
        Model::Gaussian(_) => "gaussian",
        Model::Grid(_) => "grid",
    }
}

fn unperturbed_potential(model: &Model) -> Option<&QuadraticPotential> {
    let potential = match model {
        Model::Gaussian(g) => Some(&g.potential),
        Model::Grid(g) => g.potential.as_ref(),
    };
    potential.filter(|p| !p.has_perturbation())
}

/// The mode-appropriate transport constant: exact conditional-precision
/// eigenvalues for Gaussian models, the sampled estimate for grids.
pub fn pick_rho(built: &BuiltModel, trials: u64, seed: u64) -> Result<RhoCertificate, CliError> {
    let result = match &built.model {
        Model::Gaussian(_) => rho_gaussian_conditionals(&built.model, &built.family),
        Model::Grid(_) => rho_empirical_family(&built.model, &built.family, trials, seed),
    };
    result.map_err(|e| CliError::Config(format!("rho certification: {e}")))
}

/// Certify the contraction deficiency. Small discrete state spaces get
/// the exhaustive sup; larger ones a seeded sampled search.
pub fn pick_delta(
    built: &BuiltModel,
    pair_budget: u64,
    seed: u64,
) -> Result<ContractivityOutcome, CliError> {
    check_contractivity_def1(&built.model, &built.family, pair_budget, seed)
        .map_err(|e| CliError::Config(format!("contractivity certification: {e}")))
}

pub fn family_stats(family: &PatchFamily) -> FamilyStats {
    FamilyStats {
        sites: family.site_count(),
        members: family.patches().len(),
        total: family.total(),
        min_coverage: family.min_coverage(),
        max_coverage: family.max_coverage(),
    }
}

fn matrix_norms(built: &BuiltModel) -> MatrixNorms {
    let a = dobrushin_matrix_a(&built.model, &built.family)
        .ok()
        .and_then(|m| m.a)
        .and_then(|m| operator_norm(&m).ok());
    let b = unperturbed_potential(&built.model).and_then(|potential| {
        let zeros = DVector::zeros(potential.dim());
        matrix_b(potential, &built.family, &zeros, &zeros)
            .ok()
            .and_then(|m| m.b)
            .and_then(|m| operator_norm(&m).ok())
    });
    MatrixNorms { a, b }
}

/// Assembles the full certificate payload; shared with `verify`, which
/// stamps the same file into its output directory.
pub fn assemble(built: &BuiltModel, trials: u64, seed: u64) -> Result<CertificatesFile, CliError> {
    let rho = pick_rho(built, trials, seed)?;
    let outcome = pick_delta(built, trials.saturating_mul(64).max(1 << 16), seed)?;
    let (delta, failure) = match outcome {
        ContractivityOutcome::Certified(c) => (Some(c), None),
        ContractivityOutcome::Failure(f) => (None, Some(f)),
    };
    Ok(CertificatesFile {
        config_hash: built.config_hash.clone(),
        mode: mode_name(&built.model),
        family: family_stats(&built.family),
        rho,
        delta,
        failure,
        matrix_norms: matrix_norms(built),
    })
}

pub fn render_json(file: &CertificatesFile) -> String {
    let mut text =
        serde_json::to_string_pretty(file).expect("certificate payloads always serialize");
    text.push('\n');
    text
}

pub fn run(args: &CertifyArgs) -> Result<i32, CliError> {
    let built = load_config(&args.common.config)?;
    let file = assemble(&built, args.trials, args.common.seed)?;

    println!(
        "model {} ({}, {} sites)",
        &file.config_hash[..12],
        file.mode,
        file.family.sites
    );
    println!(
        "patch family: members = {}, N = {}, t = {}, v = {}",
        file.family.members, file.family.total, file.family.min_coverage, file.family.max_coverage
    );
    println!(
        "rho = {:.6} ({}, {})",
        file.rho.rho,
        kind_str(&file.rho),
        rigor_str(file.rho.rigorous)
    );
    match (&file.delta, &file.failure) {
        (Some(delta), _) => println!(
            "delta = {:.6} (sup ratio {:.6} over t = {}, {}, {})",
            delta.delta,
            delta.sup_ratio,
            delta.t,
            serde_json::to_value(delta.method)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_else(|| format!("{:?}", delta.method)),
            rigor_str(delta.rigorous)
        ),
        (None, Some(failure)) => println!(
            "not contractive: sup ratio {:.6} reached the coverage bound",
            failure.sup_ratio
        ),
        (None, None) => unreachable!("delta outcome is always one of the two"),
    }
    if let Some(a) = file.matrix_norms.a {
        println!("|A| = {a:.6}");
    }
    if let Some(b) = file.matrix_norms.b {
        println!("|B| = {b:.6}");
    }

    write_atomic(&args.common.out, "certificates.json", &render_json(&file))?;

    Ok(if file.failure.is_some() { 3 } else { 0 })
}

fn kind_str(rho: &RhoCertificate) -> String {
    serde_json::to_value(rho.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{:?}", rho.kind))
}

fn rigor_str(rigorous: bool) -> &'static str {
    if rigorous {
        "rigorous"
    } else {
        "non-rigorous"
    }
}
