//! Finitely supported measures on axis-aligned product grids.
//!
//! States are flat indices into a row-major tensor: site 0 is the
//! slowest axis, the last site the fastest. Axes carry the real
//! coordinates of each level, so grid states embed into Euclidean space
//! and transport costs are computed on the embedded points.

use nalgebra::DVector;
use rand::Rng;

use super::{ModelError, QuadraticPotential};

/// A probability tensor over a product of finite 1D grids.
#[derive(Debug, Clone)]
pub struct GridMeasure {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    probs: Vec<f64>,
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

impl GridMeasure {
    /// Validates axes (strictly increasing, finite) and weights
    /// (nonnegative, summing to 1 within `1e-12`).
    pub fn new(axes: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, ModelError> {
        for (k, axis) in axes.iter().enumerate() {
            let ok = !axis.is_empty()
                && axis.iter().all(|v| v.is_finite())
                && axis.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(ModelError::NonMonotoneAxis { axis: k });
            }
        }
        let state_count: usize = axes.iter().map(Vec::len).product();
        if probs.len() != state_count {
            return Err(ModelError::DimensionMismatch {
                what: "grid weights",
                expected: state_count,
                got: probs.len(),
            });
        }
        for (state, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(ModelError::NegativeWeight { state, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::NotNormalized { sum });
        }
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        Ok(GridMeasure {
            strides: row_major_strides(&shape),
            axes,
            probs,
        })
    }

    pub fn site_count(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn state_count(&self) -> usize {
        self.probs.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn axis(&self, site: usize) -> &[f64] {
        &self.axes[site]
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    /// Level of `site` within flat state `state`.
    pub fn level_of(&self, state: usize, site: usize) -> usize {
        (state / self.strides[site]) % self.axes[site].len()
    }

    /// Flat index from per-site levels.
    pub fn flat(&self, levels: &[usize]) -> usize {
        debug_assert_eq!(levels.len(), self.site_count());
        levels
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| l * s)
            .sum()
    }

    /// Per-site levels of a flat state.
    pub fn levels(&self, state: usize) -> Vec<usize> {
        (0..self.site_count())
            .map(|site| self.level_of(state, site))
            .collect()
    }

    /// Embedded coordinates of a flat state.
    pub fn point(&self, state: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.site_count(),
            (0..self.site_count()).map(|site| self.axes[site][self.level_of(state, site)]),
        )
    }

    /// `E |X|^2` under the measure.
    pub fn second_moment(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(s, &p)| p * self.point(s).norm_squared())
            .sum()
    }

    pub fn mass_of<F: Fn(usize) -> bool>(&self, indicator: F) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(s, _)| indicator(*s))
            .map(|(_, &p)| p)
            .sum()
    }

    /// Conditional measure given a state set: weights restricted to the
    /// set and renormalized. Errors if the set carries no mass.
    pub fn restrict<F: Fn(usize) -> bool>(&self, indicator: F) -> Result<GridMeasure, ModelError> {
        let mass = self.mass_of(&indicator);
        if mass <= 0.0 {
            return Err(ModelError::NotNormalized { sum: 0.0 });
        }
        let probs = self
            .probs
            .iter()
            .enumerate()
            .map(|(s, &p)| if indicator(s) { p / mass } else { 0.0 })
            .collect();
        Ok(GridMeasure {
            axes: self.axes.clone(),
            strides: self.strides.clone(),
            probs,
        })
    }

    /// Replaces the weight vector, keeping axes. Weights are
    /// renormalized; total must be positive.
    pub fn with_probs(&self, mut probs: Vec<f64>) -> Result<GridMeasure, ModelError> {
        if probs.len() != self.state_count() {
            return Err(ModelError::DimensionMismatch {
                what: "grid weights",
                expected: self.state_count(),
                got: probs.len(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if !(sum > 0.0) {
            return Err(ModelError::NotNormalized { sum });
        }
        for p in &mut probs {
            *p /= sum;
        }
        Ok(GridMeasure {
            axes: self.axes.clone(),
            strides: self.strides.clone(),
            probs,
        })
    }

    /// Draws one flat state by inverse CDF walk.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng)
    }

    /// True when both measures share axes exactly.
    pub fn same_support(&self, other: &GridMeasure) -> bool {
        self.axes == other.axes
    }
}

/// Samples an index proportionally to `weights` (assumed to sum to ~1;
/// the final index absorbs any rounding deficit).
pub fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Discretizes `exp(-Phi)` over the product of `axes`: evaluates the
/// potential at every grid point, stabilizes by subtracting the minimum
/// energy, exponentiates, and normalizes.
pub fn discretize(
    potential: &QuadraticPotential,
    axes: Vec<Vec<f64>>,
) -> Result<GridMeasure, ModelError> {
    if axes.len() != potential.dim() {
        return Err(ModelError::DimensionMismatch {
            what: "grid axes",
            expected: potential.dim(),
            got: axes.len(),
        });
    }
    // Validate axes up front via a uniform dummy, then overwrite weights.
    let state_count: usize = axes.iter().map(Vec::len).product();
    if state_count == 0 {
        return Err(ModelError::NonMonotoneAxis { axis: 0 });
    }
    let uniform = vec![1.0 / state_count as f64; state_count];
    let grid = GridMeasure::new(axes, uniform)?;

    let energies: Vec<f64> = (0..state_count)
        .map(|s| potential.phi(&grid.point(s)))
        .collect();
    let min_energy = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-(e - min_energy)).exp()).collect();
    grid.with_probs(weights)
}
