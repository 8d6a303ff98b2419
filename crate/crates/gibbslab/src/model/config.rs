//! JSON model configuration: parsing, validation, and hashing.
//!
//! The file format is deliberately small. Sites are 1-based in JSON
//! (and 0-based everywhere else in the crate). Example:
//!
//! ```json
//! {
//!   "mode": "gaussian",
//!   "n": 2,
//!   "j": [[1.0, 0.5], [0.5, 1.0]],
//!   "h": [0.0, 0.0],
//!   "patches": [{"sites": [1]}, {"sites": [2]}]
//! }
//! ```
//!
//! `j` is either a dense row-major matrix or `{"triplets": [[i, k, v],
//! ...]}` where each triplet sets `J[i][k]` and `J[k][i]` (listing the
//! same pair twice is an error). `h` defaults to zeros. Grid mode adds
//! `"axes": [[...], ...]` (one strictly increasing level list per
//! site), and the measure is the normalized discretization of
//! `exp(-Phi)` on the product grid. Optional blocks:
//!
//! * `boundary`: exterior couplings folded into `h` (see the potential
//!   module), with exterior sites as arbitrary integer labels;
//! * `k`: tabulated per-site perturbations with a declared sup-norm
//!   (grid mode only).
//!
//! Parsing is strict: unknown fields are rejected so that typos fail
//! loudly instead of silently configuring a different model.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    build_patch_family, build_quadratic_potential, BoundaryField, Model, ModelError, PatchFamily,
    SiteTable,
};
use nalgebra::{DMatrix, DVector};

/// Largest grid tensor the builder will materialize.
pub const MAX_GRID_STATES: usize = 4_000_000;
/// Largest site count accepted from a config file.
pub const MAX_SITES: usize = 4096;

/// Interaction matrix: dense rows, or symmetric triplets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JSpec {
    Dense(Vec<Vec<f64>>),
    Sparse { triplets: Vec<(u64, u64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCoupling {
    /// Interior site, 1-based.
    pub interior: u64,
    /// Exterior site label (any integer; may be negative).
    pub exterior: i64,
    /// Coupling strength `b`.
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaEntry {
    pub site: i64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    #[serde(default)]
    pub couplings: Vec<BoundaryCoupling>,
    #[serde(default)]
    pub omega: Vec<OmegaEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KTable {
    /// Site, 1-based.
    pub site: u64,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSpec {
    pub sup_norm: f64,
    pub tables: Vec<KTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    /// Sites, 1-based.
    pub sites: Vec<u64>,
    /// Defaults to 1.
    #[serde(default = "one")]
    pub multiplicity: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `"gaussian"` or `"grid"`.
    pub mode: String,
    /// Number of interior sites.
    pub n: u64,
    pub j: JSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<KSpec>,
    pub patches: Vec<PatchSpec>,
    /// Grid mode only: one level list per site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Vec<f64>>>,
}

/// A parsed-and-built model plus its patch family.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: Model,
    pub family: PatchFamily,
    /// Hex SHA-256 of the canonical config serialization.
    pub config_hash: String,
}

fn cfg_err(msg: impl Into<String>) -> ModelError {
    ModelError::Config(msg.into())
}

fn site_index(raw: u64, n: usize, what: &str) -> Result<usize, ModelError> {
    if raw == 0 || raw > n as u64 {
        return Err(cfg_err(format!(
            "{what}: site {raw} out of range (sites are 1-based, n = {n})"
        )));
    }
    Ok((raw - 1) as usize)
}

impl ModelConfig {
    /// Parses a config from JSON. Error messages carry serde_json's
    /// line/column diagnostics.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    /// Canonical serialization used for hashing: the parsed struct
    /// re-serialized with fixed field order and defaults materialized.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config structs always serialize")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json); stamped
    /// into reports so outputs are traceable to the exact model.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to String");
        }
        hex
    }

    fn build_j(&self, n: usize) -> Result<DMatrix<f64>, ModelError> {
        match &self.j {
            JSpec::Dense(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(cfg_err(format!("j: expected a dense {n}x{n} matrix")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(DMatrix::from_row_slice(n, n, &flat))
            }
            JSpec::Sparse { triplets } => {
                let mut j = DMatrix::zeros(n, n);
                let mut seen = std::collections::HashSet::new();
                for &(i_raw, k_raw, v) in triplets {
                    let i = site_index(i_raw, n, "j triplet")?;
                    let k = site_index(k_raw, n, "j triplet")?;
                    let key = (i.min(k), i.max(k));
                    if !seen.insert(key) {
                        return Err(cfg_err(format!(
                            "j: pair ({}, {}) assigned twice",
                            i_raw.min(k_raw),
                            i_raw.max(k_raw)
                        )));
                    }
                    j[(i, k)] = v;
                    j[(k, i)] = v;
                }
                Ok(j)
            }
        }
    }

    /// Validates the config and builds the model and patch family.
    pub fn build(&self) -> Result<BuiltModel, ModelError> {
        if self.n == 0 || self.n > MAX_SITES as u64 {
            return Err(cfg_err(format!(
                "n must be between 1 and {MAX_SITES}, got {}",
                self.n
            )));
        }
        let n = self.n as usize;
        let j = self.build_j(n)?;

        let h = match &self.h {
            Some(values) => {
                if values.len() != n {
                    return Err(cfg_err(format!(
                        "h: expected {n} entries, got {}",
                        values.len()
                    )));
                }
                DVector::from_row_slice(values)
            }
            None => DVector::zeros(n),
        };

        let boundary = match &self.boundary {
            Some(spec) => {
                let mut couplings = Vec::with_capacity(spec.couplings.len());
                for c in &spec.couplings {
                    if !c.b.is_finite() {
                        return Err(cfg_err("boundary coupling b must be finite"));
                    }
                    couplings.push((site_index(c.interior, n, "boundary coupling")?, c.exterior, c.b));
                }
                let mut omega = std::collections::BTreeMap::new();
                for entry in &spec.omega {
                    if !entry.value.is_finite() {
                        return Err(cfg_err("omega value must be finite"));
                    }
                    if omega.insert(entry.site, entry.value).is_some() {
                        return Err(cfg_err(format!(
                            "omega: exterior site {} assigned twice",
                            entry.site
                        )));
                    }
                }
                Some(BoundaryField { couplings, omega })
            }
            None => None,
        };

        let k = match &self.k {
            Some(spec) => {
                let mut tables = Vec::with_capacity(spec.tables.len());
                let mut seen = std::collections::HashSet::new();
                for t in &spec.tables {
                    let site = site_index(t.site, n, "k table")?;
                    if !seen.insert(site) {
                        return Err(cfg_err(format!("k: site {} has two tables", t.site)));
                    }
                    tables.push((site, SiteTable::new(site, t.x.clone(), t.values.clone())?));
                }
                Some((tables, spec.sup_norm))
            }
            None => None,
        };

        let potential = build_quadratic_potential(j, h, boundary.as_ref(), k)?;

        let members: Vec<(Vec<usize>, u32)> = self
            .patches
            .iter()
            .map(|p| {
                let sites = p
                    .sites
                    .iter()
                    .map(|&s| site_index(s, n, "patch"))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((sites, p.multiplicity))
            })
            .collect::<Result<_, ModelError>>()?;
        let family = build_patch_family(n, &members)?;

        let model = match self.mode.as_str() {
            "gaussian" => {
                if self.axes.is_some() {
                    return Err(cfg_err("axes are only valid in grid mode"));
                }
                Model::gaussian(potential)?
            }
            "grid" => {
                let axes = self
                    .axes
                    .clone()
                    .ok_or_else(|| cfg_err("grid mode requires axes"))?;
                if axes.len() != n {
                    return Err(cfg_err(format!(
                        "axes: expected {n} level lists, got {}",
                        axes.len()
                    )));
                }
                let mut states: usize = 1;
                for (idx, axis) in axes.iter().enumerate() {
                    if axis.is_empty() {
                        return Err(cfg_err(format!("axes[{}] is empty", idx + 1)));
                    }
                    states = states
                        .checked_mul(axis.len())
                        .filter(|&s| s <= MAX_GRID_STATES)
                        .ok_or_else(|| {
                            cfg_err(format!(
                                "grid has more than {MAX_GRID_STATES} states; refusing to materialize"
                            ))
                        })?;
                }
                Model::grid_from_potential(potential, axes)?
            }
            other => {
                return Err(cfg_err(format!(
                    "mode must be \"gaussian\" or \"grid\", got {other:?}"
                )))
            }
        };

        Ok(BuiltModel {
            model,
            family,
            config_hash: self.hash(),
        })
    }
}

/// Parses and builds in one step.
pub fn load_model(text: &str) -> Result<BuiltModel, ModelError> {
    ModelConfig::from_json(text)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TWO_SITE: &str = r#"{
        "mode": "gaussian",
        "n": 2,
        "j": [[1.0, 0.5], [0.5, 1.0]],
        "patches": [{"sites": [1]}, {"sites": [2]}]
    }"#;

    #[test]
    fn gaussian_round_trip() {
        let built = load_model(TWO_SITE).unwrap();
        let m = built.model.as_gaussian().unwrap();
        assert_eq!(m.measure.dim(), 2);
        assert_eq!(built.family.total(), 2);
        assert_relative_eq!(m.potential.j()[(0, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sparse_triplets_fill_both_sides() {
        let text = r#"{
            "mode": "gaussian",
            "n": 2,
            "j": {"triplets": [[1, 1, 1.0], [2, 2, 1.0], [1, 2, 0.5]]},
            "patches": [{"sites": [1]}, {"sites": [2]}]
        }"#;
        let built = load_model(text).unwrap();
        let m = built.model.as_gaussian().unwrap();
        assert_relative_eq!(m.potential.j()[(1, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn duplicate_triplet_is_rejected() {
        let text = r#"{
            "mode": "gaussian",
            "n": 2,
            "j": {"triplets": [[1, 2, 0.5], [2, 1, 0.5], [1, 1, 1.0], [2, 2, 1.0]]},
            "patches": [{"sites": [1, 2]}]
        }"#;
        assert!(load_model(text).is_err());
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = TWO_SITE.replace("\"n\": 2,", "\"n\": 2, \"extra\": 1,");
        assert!(ModelConfig::from_json(&text).is_err());
    }

    #[test]
    fn grid_mode_builds_tensor() {
        let text = r#"{
            "mode": "grid",
            "n": 2,
            "j": [[1.0, 0.5], [0.5, 1.0]],
            "patches": [{"sites": [1]}, {"sites": [2]}],
            "axes": [[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]]
        }"#;
        let built = load_model(text).unwrap();
        let g = built.model.as_grid().unwrap();
        assert_eq!(g.measure.state_count(), 9);
        assert!(g.potential.is_some());
        assert_relative_eq!(g.measure.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_based_sites_convert() {
        let built = load_model(TWO_SITE).unwrap();
        assert_eq!(built.family.patches()[0].sites(), &[0]);
        assert_eq!(built.family.patches()[1].sites(), &[1]);
    }

    #[test]
    fn boundary_block_shifts_field() {
        let text = r#"{
            "mode": "gaussian",
            "n": 1,
            "j": [[1.0]],
            "boundary": {
                "couplings": [{"interior": 1, "exterior": 0, "b": 0.4}],
                "omega": [{"site": 0, "value": 2.0}]
            },
            "patches": [{"sites": [1]}]
        }"#;
        let built = load_model(text).unwrap();
        let m = built.model.as_gaussian().unwrap();
        assert_relative_eq!(m.potential.h()[0], -0.8, epsilon = 1e-15);
        assert_relative_eq!(m.measure.mean()[0], -0.8, epsilon = 1e-15);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ModelConfig::from_json(TWO_SITE).unwrap();
        let b = ModelConfig::from_json(TWO_SITE).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ModelConfig::from_json(&TWO_SITE.replace("0.5", "0.6")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn oversized_grid_is_refused() {
        let axis: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let cfg = ModelConfig {
            mode: "grid".into(),
            n: 3,
            j: JSpec::Sparse { triplets: vec![] },
            h: None,
            boundary: None,
            k: None,
            patches: vec![PatchSpec {
                sites: vec![1, 2, 3],
                multiplicity: 1,
            }],
            axes: Some(vec![axis.clone(), axis.clone(), axis]),
        };
        // 300^3 = 2.7e7 > 4e6.
        assert!(cfg.build().is_err());
    }

    #[test]
    fn parse_error_reports_location() {
        let err = ModelConfig::from_json("{\"mode\": \"gaussian\",\n  \"n\": }").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "diagnostic was: {msg}");
    }
}
