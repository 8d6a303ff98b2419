//! Measures, potentials, patch families, and conditional laws.
//!
//! This module is the single source of truth for model semantics. A
//! model is either a nondegenerate Gaussian on n-dimensional Euclidean
//! space described by a quadratic potential, or a finitely supported
//! measure on an axis-aligned grid. Sites are indexed `0..n` internally;
//! the JSON configuration format uses 1-based site numbers.

mod conditional;
mod config;
mod gaussian;
mod grid;
mod patch;
mod potential;
pub mod presets;

pub use conditional::{
    conditional_law, gaussian_conditional_from_measure, gaussian_conditional_from_precision,
    grid_conditional, submatrix, subvector, ConditionalLaw, GaussianConditional, GridConditional,
};
pub use config::{
    BoundaryCoupling, BoundarySpec, JSpec, KSpec, KTable, ModelConfig, OmegaEntry, PatchSpec,
};
pub use config::{load_model, BuiltModel};
pub use gaussian::{gaussian_from_potential, GaussianMeasure};
pub use grid::{discretize, sample_index, GridMeasure};
pub use patch::{build_patch_family, singleton_family, Patch, PatchFamily};
pub use potential::{build_quadratic_potential, BoundaryField, QuadraticPotential, SiteTable};

use thiserror::Error;

/// Relative tolerance for symmetry and normalization checks.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Errors raised while building or querying models.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("patch family is empty")]
    EmptyFamily,
    #[error("patch {index} is empty")]
    EmptyPatch { index: usize },
    #[error("site {site} out of range for n = {n}")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("site {site} is covered by no patch")]
    UncoveredSite { site: usize },
    #[error("multiplicity must be >= 1 (patch {index})")]
    ZeroMultiplicity { index: usize },
    #[error("interaction matrix not symmetric: |J[{i}][{k}] - J[{k}][{i}]| = {diff:e}")]
    AsymmetricJ { i: usize, k: usize, diff: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("boundary coupling references exterior site {site} with no configured value")]
    MissingBoundaryValue { site: i64 },
    #[error("tabulated perturbation at site {site} exceeds its declared sup-norm: |{value}| > {bound}")]
    KSupNormViolated { site: usize, value: f64, bound: f64 },
    #[error("perturbation table for site {site} is malformed")]
    BadTable { site: usize },
    #[error("grid axis {axis} is not strictly increasing")]
    NonMonotoneAxis { axis: usize },
    #[error("grid weights sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("negative grid weight {value:e} at state {state}")]
    NegativeWeight { state: usize, value: f64 },
    #[error("operation requires a {expected} model")]
    ModeMismatch { expected: &'static str },
    #[error("Gaussian mode does not admit a bounded perturbation K")]
    PerturbationInGaussianMode,
    #[error("config error: {0}")]
    Config(String),
}

/// A model the sampler, certificates and verification suites operate on.
#[derive(Debug, Clone)]
pub enum Model {
    /// Gaussian law determined by a quadratic potential.
    Gaussian(GaussianModel),
    /// Finitely supported law on a product grid.
    Grid(GridModel),
}

/// Gaussian model: the potential and the measure it induces.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub potential: QuadraticPotential,
    pub measure: GaussianMeasure,
}

/// Grid model: the joint tensor, with the potential kept when the
/// measure was obtained by discretization (needed for influence
/// matrices that differentiate the potential).
#[derive(Debug, Clone)]
pub struct GridModel {
    pub measure: GridMeasure,
    pub potential: Option<QuadraticPotential>,
}

/// A probability measure of either model type; the moving distribution
/// in interpolation chains (models stay fixed, measures evolve).
#[derive(Debug, Clone)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Grid(GridMeasure),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian(m) => m.dim(),
            Measure::Grid(m) => m.site_count(),
        }
    }

    /// `E |X|^2`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Measure::Gaussian(m) => m.second_moment(),
            Measure::Grid(m) => m.second_moment(),
        }
    }

    pub fn as_gaussian(&self) -> Result<&GaussianMeasure, ModelError> {
        match self {
            Measure::Gaussian(m) => Ok(m),
            Measure::Grid(_) => Err(ModelError::ModeMismatch {
                expected: "gaussian",
            }),
        }
    }

    pub fn as_grid(&self) -> Result<&GridMeasure, ModelError> {
        match self {
            Measure::Grid(m) => Ok(m),
            Measure::Gaussian(_) => Err(ModelError::ModeMismatch { expected: "grid" }),
        }
    }
}

impl Model {
    /// Builds a Gaussian model from a quadratic potential (K must be
    /// absent and J positive definite).
    pub fn gaussian(potential: QuadraticPotential) -> Result<Self, ModelError> {
        let measure = gaussian_from_potential(&potential)?;
        Ok(Model::Gaussian(GaussianModel { potential, measure }))
    }

    /// Builds a grid model by discretizing a potential over the given axes.
    pub fn grid_from_potential(
        potential: QuadraticPotential,
        axes: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let measure = discretize(&potential, axes)?;
        Ok(Model::Grid(GridModel {
            measure,
            potential: Some(potential),
        }))
    }

    /// Wraps a grid measure that did not come from a potential.
    pub fn grid(measure: GridMeasure) -> Self {
        Model::Grid(GridModel {
            measure,
            potential: None,
        })
    }

    pub fn site_count(&self) -> usize {
        match self {
            Model::Gaussian(m) => m.measure.dim(),
            Model::Grid(m) => m.measure.site_count(),
        }
    }

    /// The model's stationary measure.
    pub fn measure(&self) -> Measure {
        match self {
            Model::Gaussian(m) => Measure::Gaussian(m.measure.clone()),
            Model::Grid(m) => Measure::Grid(m.measure.clone()),
        }
    }

    pub fn as_gaussian(&self) -> Result<&GaussianModel, ModelError> {
        match self {
            Model::Gaussian(m) => Ok(m),
            Model::Grid(_) => Err(ModelError::ModeMismatch {
                expected: "gaussian",
            }),
        }
    }

    pub fn as_grid(&self) -> Result<&GridModel, ModelError> {
        match self {
            Model::Grid(m) => Ok(m),
            Model::Gaussian(_) => Err(ModelError::ModeMismatch { expected: "grid" }),
        }
    }
}
