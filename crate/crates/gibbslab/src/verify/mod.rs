//! Inequality pipelines: every bound the crate certifies is re-checked
//! here against trial distributions, and each check is emitted as a
//! self-verifying report.
//!
//! A report records the two sides of one inequality instance together
//! with the tolerance it was judged under, so `pass` can always be
//! recomputed from the stored numbers. Exact pipelines (closed forms,
//! transport LPs, tensor arithmetic) run at a fixed absolute tolerance;
//! Monte Carlo pipelines widen it to three standard errors of the
//! estimate. Trials with infinite divergence make the bound vacuous
//! and are passed with an explicit flag rather than dropped.
//!
//! Report identifiers are a fixed vocabulary (stable across releases,
//! used by the CLI's `--suite` flag and by golden tests):
//!
//! | id            | inequality                                                    |
//! |---------------|---------------------------------------------------------------|
//! | `eq2.3`       | per-step transport bound `E|dZ|^2 <= (2/rho) dD`              |
//! | `lemma1`      | chain aggregate `E|Y-Z|^2 <= (M/N) v sum E|dZ|^2`             |
//! | `aux`         | sweep transport `W^2(p, p G^M) <= (M/N) v (2/rho) D`          |
//! | `prop2`       | sweep contraction `W^2(pG, rG) <= (1 - t delta/N) W^2(p, r)`  |
//! | `cor2`        | geometric decay `W^2(p G^m, q) <= (1 - t delta/N)^m W^2(p,q)` |
//! | `thm1`        | distance-divergence `W <= C sqrt((v/t)(1/delta)(2/rho) D)`    |
//! | `thm2-bridge` | gradient bridge for the contractivity sup                     |
//! | `cor1`        | perturbed-lattice `W^2 <= C^2 (2/rho) D / (1 - |B/rho|^2)`    |
//! | `conc1.1`     | set concentration `d(A,B) <= c (sqrt(log 1/q(A)) + ...)`      |
//! | `chain3.12`   | divergence telescope along an interpolation chain             |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde_json::json;
use thiserror::Error;

use crate::certify::{CertifyError, ContractivityCertificate, RhoCertificate};

mod chains;
mod concentration;
mod constants;
mod kernels;
mod theorems;

pub use chains::verify_lemma1_and_step;
pub use concentration::{concentration_constant, set_distance, verify_concentration};
pub use constants::{choose_m, constant_c};
pub use kernels::{verify_aux_theorem, verify_corollary2, verify_prop2};
pub use theorems::{verify_corollary1, verify_theorem1, verify_theorem2_bridge};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Transport(#[from] crate::transport::TransportError),
    #[error(transparent)]
    Divergence(#[from] crate::divergence::DivergenceError),
    #[error(transparent)]
    Gibbs(#[from] crate::gibbs::GibbsError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error("no sweep schedule exists for contraction deficiency {0}")]
    NotContractive(f64),
    #[error("a concentration set pair is empty")]
    EmptySet,
    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),
    #[error("invalid tolerance overrides: {0}")]
    BadTolerance(String),
}

/// Stable identifier of one inequality pipeline.
///
/// Variant names say what is checked; the serialized form (`Display`
/// and [`FromStr`]) is the fixed wire vocabulary listed in the module
/// docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InequalityId {
    /// `eq2.3` — one interpolation step moves at most `(2/rho)` times
    /// its divergence increment.
    StepTransport,
    /// `lemma1` — end-to-end chain displacement against the summed
    /// per-step displacements.
    ChainAggregate,
    /// `aux` — transport cost of `M` averaged sweeps against the
    /// initial divergence.
    SweepTransport,
    /// `prop2` — one averaged sweep contracts squared transport cost.
    SweepContraction,
    /// `cor2` — iterated sweeps decay geometrically toward the model.
    GeometricDecay,
    /// `thm1` — the distance-divergence inequality with the scanned
    /// numerical constant.
    DistanceDivergence,
    /// `thm2-bridge` — the contractivity sup bounded through potential
    /// gradients.
    GradientBridge,
    /// `cor1` — distance-divergence for lattice potentials with
    /// interaction norm below the single-site constant.
    PerturbedLattice,
    /// `conc1.1` — two-set concentration from the distance-divergence
    /// constant.
    Concentration,
    /// `chain3.12` — the divergence telescope (and its dropped-tail
    /// sum bound) along an interpolation chain.
    ChainTelescope,
}

/// All ids, in the fixed reporting order.
pub const ALL_IDS: [InequalityId; 10] = [
    InequalityId::StepTransport,
    InequalityId::ChainAggregate,
    InequalityId::SweepTransport,
    InequalityId::SweepContraction,
    InequalityId::GeometricDecay,
    InequalityId::DistanceDivergence,
    InequalityId::GradientBridge,
    InequalityId::PerturbedLattice,
    InequalityId::Concentration,
    InequalityId::ChainTelescope,
];

impl InequalityId {
    pub fn as_str(self) -> &'static str {
        match self {
            InequalityId::StepTransport => "eq2.3",
            InequalityId::ChainAggregate => "lemma1",
            InequalityId::SweepTransport => "aux",
            InequalityId::SweepContraction => "prop2",
            InequalityId::GeometricDecay => "cor2",
            InequalityId::DistanceDivergence => "thm1",
            InequalityId::GradientBridge => "thm2-bridge",
            InequalityId::PerturbedLattice => "cor1",
            InequalityId::Concentration => "conc1.1",
            InequalityId::ChainTelescope => "chain3.12",
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InequalityId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_IDS
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown inequality id {s:?}"))
    }
}

/// Default absolute tolerance for exactly evaluated inequalities.
pub const EXACT_TOL: f64 = 1e-9;

/// Monte Carlo tolerances are this many standard errors wide.
pub const MC_STDERR_FACTOR: f64 = 3.0;

/// Per-id tolerance policy: exact pipelines run at [`EXACT_TOL`] and
/// Monte Carlo pipelines at [`MC_STDERR_FACTOR`] standard errors,
/// unless an override pins a specific id to a fixed number.
#[derive(Debug, Clone, Default)]
pub struct ToleranceTable {
    overrides: BTreeMap<InequalityId, f64>,
}

impl ToleranceTable {
    /// Parses overrides from a JSON object `{"id": tolerance, ...}`.
    /// Unknown ids, non-numbers, and negative or non-finite values are
    /// rejected (this parser faces untrusted CLI input).
    pub fn from_json(text: &str) -> Result<Self, VerifyError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| VerifyError::BadTolerance(e.to_string()))?;
        let map = value
            .as_object()
            .ok_or_else(|| VerifyError::BadTolerance("expected a JSON object".into()))?;
        let mut overrides = BTreeMap::new();
        for (key, raw) in map {
            let id = InequalityId::from_str(key).map_err(VerifyError::BadTolerance)?;
            let tol = raw
                .as_f64()
                .ok_or_else(|| VerifyError::BadTolerance(format!("{key}: expected a number")))?;
            if !tol.is_finite() || tol < 0.0 {
                return Err(VerifyError::BadTolerance(format!(
                    "{key}: tolerance must be finite and nonnegative, got {tol}"
                )));
            }
            overrides.insert(id, tol);
        }
        Ok(ToleranceTable { overrides })
    }

    /// Tolerance for an exactly evaluated instance of `id`.
    pub fn exact(&self, id: InequalityId) -> f64 {
        self.overrides.get(&id).copied().unwrap_or(EXACT_TOL)
    }

    /// Tolerance for a Monte Carlo instance of `id` with the given
    /// standard error.
    pub fn monte_carlo(&self, id: InequalityId, stderr: f64) -> f64 {
        self.overrides
            .get(&id)
            .copied()
            .unwrap_or(MC_STDERR_FACTOR * stderr)
    }
}

/// Everything a pipeline needs besides its mathematical inputs: the
/// model identity stamped into report metadata, the master seed all
/// randomized trials derive from, and the tolerance policy.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub model_hash: String,
    pub seed: u64,
    pub tolerances: ToleranceTable,
}

impl RunContext {
    pub fn new(model_hash: impl Into<String>, seed: u64, tolerances: ToleranceTable) -> Self {
        RunContext {
            model_hash: model_hash.into(),
            seed,
            tolerances,
        }
    }

    /// Context with default tolerances.
    pub fn with_seed(model_hash: impl Into<String>, seed: u64) -> Self {
        RunContext::new(model_hash, seed, ToleranceTable::default())
    }

    fn meta(&self, trial: u64) -> TrialMeta {
        TrialMeta {
            model: self.model_hash.clone(),
            seed: self.seed,
            trial,
        }
    }
}

/// Which model, which seed, which trial a report came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialMeta {
    pub model: String,
    pub seed: u64,
    pub trial: u64,
}

/// One checked inequality instance.
///
/// `margin = rhs - lhs` and `pass <=> margin >= -tolerance`; both are
/// stored so a report can be re-judged from its own numbers. `vacuous`
/// marks trials whose right-hand side is infinite (an infinite
/// divergence makes the bound vacuously true). `rigorous` is false
/// whenever any certificate feeding the bound was itself estimated
/// rather than proved.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub id: InequalityId,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub meta: TrialMeta,
    pub labels: Vec<String>,
    pub rigorous: bool,
    pub vacuous: bool,
}

impl VerificationReport {
    fn build(
        id: InequalityId,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
        meta: TrialMeta,
        labels: Vec<String>,
        rigorous: bool,
    ) -> Self {
        let margin = rhs - lhs;
        VerificationReport {
            id,
            lhs,
            rhs,
            margin,
            pass: margin >= -tolerance,
            tolerance,
            meta,
            labels,
            rigorous,
            vacuous: rhs == f64::INFINITY,
        }
    }

    /// Recomputes the pass flag from the stored numbers.
    pub fn recheck(&self) -> bool {
        self.rhs - self.lhs >= -self.tolerance
    }

    /// One JSON object per report; keys are emitted in sorted order,
    /// so equal reports serialize to equal bytes. Non-finite numbers
    /// are written as strings (`"inf"`, `"-inf"`, `"NaN"`) since JSON
    /// has no representation for them.
    pub fn to_json_line(&self) -> String {
        fn num(x: f64) -> serde_json::Value {
            if x.is_finite() {
                json!(x)
            } else {
                json!(format!("{x}"))
            }
        }
        json!({
            "id": self.id.as_str(),
            "lhs": num(self.lhs),
            "rhs": num(self.rhs),
            "margin": num(self.margin),
            "pass": self.pass,
            "tolerance": num(self.tolerance),
            "model": self.meta.model,
            "seed": self.meta.seed,
            "trial": self.meta.trial,
            "labels": self.labels,
            "rigorous": self.rigorous,
            "vacuous": self.vacuous,
        })
        .to_string()
    }
}

/// Aggregates reports into the summary CSV: one row per id present,
/// in the fixed id order, with the worst (smallest) margin.
pub fn summary_csv(reports: &[VerificationReport]) -> String {
    let mut out = String::from("id,trials,passes,min_margin\n");
    for id in ALL_IDS {
        let rows: Vec<&VerificationReport> = reports.iter().filter(|r| r.id == id).collect();
        if rows.is_empty() {
            continue;
        }
        let passes = rows.iter().filter(|r| r.pass).count();
        let min_margin = rows
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, |a, b| if b < a { b } else { a });
        let margin_repr = if min_margin.is_finite() {
            format!("{min_margin}")
        } else {
            format!("{min_margin:?}")
        };
        out.push_str(&format!("{id},{},{passes},{margin_repr}\n", rows.len()));
    }
    out
}

/// Label fragment for reports that used a transport-constant
/// certificate.
pub fn rho_label(cert: &RhoCertificate) -> String {
    let kind = serde_json::to_value(cert.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{:?}", cert.kind));
    if cert.rigorous {
        format!("rho: {kind}")
    } else {
        format!("rho: {kind} (non-rigorous)")
    }
}

/// Label fragment for reports that used a contractivity certificate.
pub fn delta_label(cert: &ContractivityCertificate) -> String {
    let method = serde_json::to_value(cert.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{:?}", cert.method));
    if cert.rigorous {
        format!("delta: {method}")
    } else {
        format!("delta: {method} (non-rigorous)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TrialMeta {
        TrialMeta {
            model: "m".into(),
            seed: 7,
            trial: 0,
        }
    }

    #[test]
    fn ids_round_trip_through_strings() {
        for id in ALL_IDS {
            assert_eq!(InequalityId::from_str(id.as_str()).unwrap(), id);
        }
        assert!(InequalityId::from_str("thm3").is_err());
    }

    #[test]
    fn report_is_self_verifying() {
        let r = VerificationReport::build(
            InequalityId::DistanceDivergence,
            1.0,
            1.5,
            1e-9,
            meta(),
            vec![],
            true,
        );
        assert!(r.pass);
        assert_eq!(r.pass, r.recheck());
        let f = VerificationReport::build(
            InequalityId::DistanceDivergence,
            1.5,
            1.0,
            1e-9,
            meta(),
            vec![],
            true,
        );
        assert!(!f.pass);
        assert_eq!(f.pass, f.recheck());
    }

    #[test]
    fn boundary_margins_respect_the_tolerance() {
        let just_in = VerificationReport::build(
            InequalityId::SweepTransport,
            1.0 + 0.5e-9,
            1.0,
            1e-9,
            meta(),
            vec![],
            true,
        );
        assert!(just_in.pass);
        let just_out = VerificationReport::build(
            InequalityId::SweepTransport,
            1.0 + 2e-9,
            1.0,
            1e-9,
            meta(),
            vec![],
            true,
        );
        assert!(!just_out.pass);
    }

    #[test]
    fn infinite_rhs_is_a_flagged_vacuous_pass() {
        let r = VerificationReport::build(
            InequalityId::SweepTransport,
            3.0,
            f64::INFINITY,
            1e-9,
            meta(),
            vec![],
            true,
        );
        assert!(r.pass);
        assert!(r.vacuous);
        let line = r.to_json_line();
        assert!(line.contains("\"rhs\":\"inf\""), "line: {line}");
        assert!(line.contains("\"vacuous\":true"));
    }

    #[test]
    fn json_lines_are_stable_and_parseable() {
        let r = VerificationReport::build(
            InequalityId::StepTransport,
            0.25,
            0.5,
            1e-9,
            meta(),
            vec!["rho: gaussian-exact".into()],
            true,
        );
        let a = r.to_json_line();
        let b = r.to_json_line();
        assert_eq!(a, b);
        let parsed: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(parsed["id"], "eq2.3");
        assert_eq!(parsed["margin"], 0.25);
        assert_eq!(parsed["model"], "m");
    }

    #[test]
    fn tolerance_overrides_parse_and_apply() {
        let table = ToleranceTable::from_json(r#"{"thm1": 1e-6, "aux": 0.0}"#).unwrap();
        assert_eq!(table.exact(InequalityId::DistanceDivergence), 1e-6);
        assert_eq!(table.exact(InequalityId::SweepTransport), 0.0);
        assert_eq!(table.exact(InequalityId::SweepContraction), EXACT_TOL);
        // Overrides also pin Monte Carlo ids.
        assert_eq!(table.monte_carlo(InequalityId::DistanceDivergence, 0.5), 1e-6);
        assert_eq!(
            table.monte_carlo(InequalityId::SweepContraction, 0.5),
            1.5
        );
    }

    #[test]
    fn bad_tolerance_payloads_are_rejected() {
        assert!(ToleranceTable::from_json("[1, 2]").is_err());
        assert!(ToleranceTable::from_json(r#"{"mystery": 1.0}"#).is_err());
        assert!(ToleranceTable::from_json(r#"{"thm1": -1.0}"#).is_err());
        assert!(ToleranceTable::from_json(r#"{"thm1": "wide"}"#).is_err());
        assert!(ToleranceTable::from_json("not json").is_err());
    }

    #[test]
    fn summary_groups_by_id_in_fixed_order() {
        let mk = |id, lhs: f64, rhs: f64| {
            VerificationReport::build(id, lhs, rhs, 1e-9, meta(), vec![], true)
        };
        let reports = vec![
            mk(InequalityId::DistanceDivergence, 1.0, 2.0),
            mk(InequalityId::StepTransport, 0.5, 0.75),
            mk(InequalityId::DistanceDivergence, 2.0, 1.0),
        ];
        let csv = summary_csv(&reports);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "id,trials,passes,min_margin");
        assert_eq!(lines[1], "eq2.3,1,1,0.25");
        assert_eq!(lines[2], "thm1,2,1,-1");
        assert_eq!(lines.len(), 3);
    }
}
