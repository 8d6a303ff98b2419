//! Constants the inequality suites consume: transport/log-Sobolev
//! constants `rho`, contraction deficiencies `delta`, influence
//! matrices, and the coefficient of the perturbed-measure corollary.
//!
//! Three routes produce a `delta`, in decreasing order of directness:
//!
//! 1. direct single-sweep comparison — sum over the patch family of
//!    squared transport distances between conditionals at two boundary
//!    configurations, divided by the squared distance of the
//!    configurations; `delta = 1 - sup/t` ([`check_contractivity_def1`]);
//! 2. the influence matrix `A` of worst-case conditional-mean shifts;
//!    `delta = 1 - ||A||^2 / t` ([`certificate_from_matrix_a`]);
//! 3. the mixed-derivative matrix `B` of the potential scaled by `rho`;
//!    `delta = 1 - ||B/rho||^2 / t` ([`check_theorem2`]).
//!
//! Route 1 is exact for nondegenerate quadratic models (the sup is an
//! operator norm) and exhaustive for small grids; routes 2 and 3 are
//! always upper bounds on the sup, so their certificates are weaker but
//! never wrong. A sampled sup, by contrast, can only *under*-estimate,
//! so every certificate records whether its method was rigorous and the
//! reporting layer propagates that label.
//!
//! A sup at or above `t` is a hard [`ContractivityOutcome::Failure`]:
//! deficiencies are never clamped into range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::DivergenceError;
use crate::model::ModelError;
use crate::transport::TransportError;

mod contractivity;
mod influence;
mod norms;
mod rho;

pub use contractivity::{
    certificate_from_matrix_a, check_contractivity_def1, check_contractivity_def1_gaussian,
    check_theorem2, corollary1_coefficient,
};
pub use influence::{dobrushin_matrix_a, matrix_b, InfluenceMatrices};
pub use norms::operator_norm;
pub use rho::{rho_empirical, rho_empirical_family, rho_gaussian_conditionals, rho_holley_stroock};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    /// Uniform convexity constant must be positive.
    #[error("convexity constant must be positive, got {0}")]
    NonpositiveConvexity(f64),
    /// Every trial distribution hit a zero-mass cell or the distance
    /// guard; no ratio could be formed.
    #[error("conditional too degenerate for an empirical constant ({0} trials skipped)")]
    DegenerateConditional(u64),
    /// Power iteration did not settle within the iteration cap; the
    /// true norm lies in the reported bracket.
    #[error("operator norm not converged after {iterations} iterations (bracket [{lower}, {upper}])")]
    NonConvergence {
        iterations: u64,
        lower: f64,
        upper: f64,
    },
    /// A coefficient that requires `norm_b < rho` was asked for at or
    /// beyond the boundary.
    #[error("not contractive: ratio {ratio} >= 1")]
    NotContractive { ratio: f64 },
    #[error("unsupported input: {0}")]
    Unsupported(&'static str),
}

/// How a transport/log-Sobolev constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoKind {
    /// Smallest conditional-precision eigenvalue; exact for quadratic
    /// potentials.
    GaussianExact,
    /// Bounded-perturbation transfer `c * exp(-4 ||K||_inf)`.
    HolleyStroock,
    /// Sampled infimum of `2 D(p || Q) / W^2(p, Q)`; an estimate, not
    /// a bound.
    Empirical,
}

/// A constant `rho` such that every covered conditional `Q` satisfies
/// `W^2(p, Q) <= (2 / rho) D(p || Q)` — exactly for the rigorous
/// kinds, approximately for the empirical kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoCertificate {
    pub rho: f64,
    pub kind: RhoKind,
    /// Which conditionals the constant covers.
    pub scope: String,
    /// Empirical only: trial count per boundary configuration.
    pub trials: Option<u64>,
    /// Empirical only: master seed of the trial streams.
    pub seed: Option<u64>,
    /// False exactly when the constant is a sampled estimate.
    pub rigorous: bool,
}

impl RhoCertificate {
    fn exact(rho: f64, kind: RhoKind, scope: String) -> Self {
        RhoCertificate {
            rho,
            kind,
            scope,
            trials: None,
            seed: None,
            rigorous: true,
        }
    }
}

/// How a contraction deficiency was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractivityMethod {
    /// Closed-form operator norm of the stacked conditional-mean-shift
    /// map (quadratic models).
    Def1Exact,
    /// Direct sup over every configuration pair of a finite state
    /// space.
    Def1Exhaustive,
    /// Sampled and hill-climbed sup over configuration pairs.
    Def1Empirical,
    /// Via the influence matrix `A`.
    Def2Matrix,
    /// Via the mixed-derivative matrix `B` and a `rho` certificate.
    Theorem2Matrix,
}

impl ContractivityMethod {
    pub fn is_rigorous(self) -> bool {
        !matches!(self, ContractivityMethod::Def1Empirical)
    }
}

/// Evidence backing a contractivity verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractivityWitness {
    /// The sup is the square of this operator norm.
    OperatorNorm { norm: f64 },
    /// Worst configuration pair from a full enumeration (levels per
    /// site). `skipped` counts pairs with an undefined conditional.
    ExhaustivePairs {
        pairs: u64,
        skipped: u64,
        worst_y: Vec<usize>,
        worst_z: Vec<usize>,
    },
    /// Worst configuration pair found by seeded search; a lower bound
    /// on the true sup.
    SampledPairs {
        samples: u64,
        restarts: u64,
        seed: u64,
        worst_y: Vec<usize>,
        worst_z: Vec<usize>,
    },
    /// Matrix-norm route: the sup is bounded by `(norm_b / rho)^2`.
    MatrixBound {
        norm_b: f64,
        rho: f64,
        /// Evaluation points of the derivative matrix (1 when the
        /// potential is quadratic and the matrix is constant).
        points: u64,
    },
}

/// A certified contraction deficiency `delta` in `(0, 1]`: the
/// family-summed conditional comparison ratio stays below
/// `t (1 - delta)`, which makes one averaged sweep shrink squared
/// transport distance to the model by the factor `1 - t delta / N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractivityCertificate {
    pub delta: f64,
    /// Minimum coverage of the patch family the sup was taken over.
    pub t: u32,
    pub method: ContractivityMethod,
    /// The measured (or bounded) sup of the comparison ratio; always
    /// `< t` for a certificate.
    pub sup_ratio: f64,
    pub witness: ContractivityWitness,
    pub rigorous: bool,
}

/// Evidence for a model that is *not* `(1 - delta)`-contractive by the
/// attempted route: the measured sup reached `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractivityFailure {
    pub sup_ratio: f64,
    pub t: u32,
    pub method: ContractivityMethod,
    pub witness: ContractivityWitness,
}

/// Result of a contractivity check that ran to completion: either a
/// certificate or a documented failure. Errors are reserved for inputs
/// the check could not process at all.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractivityOutcome {
    Certified(ContractivityCertificate),
    Failure(ContractivityFailure),
}

impl ContractivityOutcome {
    /// The certificate, if one was issued.
    pub fn certified(&self) -> Option<&ContractivityCertificate> {
        match self {
            ContractivityOutcome::Certified(c) => Some(c),
            ContractivityOutcome::Failure(_) => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, ContractivityOutcome::Failure(_))
    }
}

/// Builds the outcome shared by every route: certificate when
/// `sup < t`, failure otherwise. `delta` is never clamped.
fn outcome_from_sup(
    sup_ratio: f64,
    t: u32,
    method: ContractivityMethod,
    witness: ContractivityWitness,
) -> ContractivityOutcome {
    let tf = f64::from(t);
    if sup_ratio >= tf {
        return ContractivityOutcome::Failure(ContractivityFailure {
            sup_ratio,
            t,
            method,
            witness,
        });
    }
    ContractivityOutcome::Certified(ContractivityCertificate {
        delta: 1.0 - sup_ratio / tf,
        t,
        method,
        sup_ratio,
        witness,
        rigorous: method.is_rigorous(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certificates_serialize_round_trip() {
        let rho = RhoCertificate {
            rho: 0.5,
            kind: RhoKind::Empirical,
            scope: "patch {0} over 9 boundary configurations".into(),
            trials: Some(200),
            seed: Some(7),
            rigorous: false,
        };
        let json = serde_json::to_string(&rho).unwrap();
        assert!(json.contains("\"empirical\""));
        let back: RhoCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rho, rho.rho);
        assert_eq!(back.kind, rho.kind);
        assert_eq!(back.trials, Some(200));

        let outcome = outcome_from_sup(
            0.25,
            1,
            ContractivityMethod::Def1Exact,
            ContractivityWitness::OperatorNorm { norm: 0.5 },
        );
        let json = serde_json::to_string(&outcome).unwrap();
        assert!(json.contains("\"certified\""));
        assert!(json.contains("\"def1-exact\""));
        let back: ContractivityOutcome = serde_json::from_str(&json).unwrap();
        let cert = back.certified().unwrap();
        assert_eq!(cert.delta, 0.75);
        assert!(cert.rigorous);
    }

    #[test]
    fn sup_at_t_is_a_failure_not_a_clamped_delta() {
        let at = outcome_from_sup(
            1.0,
            1,
            ContractivityMethod::Def1Exact,
            ContractivityWitness::OperatorNorm { norm: 1.0 },
        );
        assert!(at.is_failure());
        let above = outcome_from_sup(
            1.44,
            1,
            ContractivityMethod::Def1Exact,
            ContractivityWitness::OperatorNorm { norm: 1.2 },
        );
        assert!(above.is_failure());
        // Just below t the certificate exists with a small delta.
        let below = outcome_from_sup(
            0.999,
            1,
            ContractivityMethod::Def1Exact,
            ContractivityWitness::OperatorNorm { norm: 0.9995 },
        );
        let cert = below.certified().unwrap();
        assert!(cert.delta > 0.0 && cert.delta < 0.002);
    }

    #[test]
    fn zero_sup_gives_the_full_deficiency() {
        let outcome = outcome_from_sup(
            0.0,
            2,
            ContractivityMethod::Def1Exact,
            ContractivityWitness::OperatorNorm { norm: 0.0 },
        );
        assert_eq!(outcome.certified().unwrap().delta, 1.0);
    }
}
