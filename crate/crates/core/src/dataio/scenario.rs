//! Scenario configuration: everything a simulation run depends on.
//!
//! ```toml
//! seed = 7
//! samples = 2000
//! positions = "uniform"          # or "boarding", or { csv = "path.csv" }
//!
//! [cabin]
//! x_min = 0.0
//! x_max = 30.0
//! y_min = 0.0
//! y_max = 3.5
//!
//! [[anchors]]
//! id = 0
//! position = { x = 3.0, y = 0.2 }
//!
//! [grid]
//! rows = 62
//! cols = 62
//!
//! [error_model]      # sigma_r_los, sigma_theta_los, nlos_mu, nlos_sigma
//! [conditions]       # p_los, p_nlos, p_outlier, p_failure
//!
//! [[anchor_conditions]]   # per-anchor replacement of [conditions]
//! anchor = 3
//! p_los = 0.2
//! p_nlos = 0.7
//! p_outlier = 0.05
//! p_failure = 0.05
//!
//! [observation]      # sigma_r, sigma_theta
//! [boarding]         # passengers, step_length, seats_per_row
//! ```
//!
//! Every table is optional. `samples` is the number of uniform draws; for
//! boarding and CSV sources it caps the number of tag states used (0 = all).
//! A relative CSV path is resolved against the scenario file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ConditionModel, ErrorModelParams};
use crate::error::{Error, Result};
use crate::geometry::{default_anchors, Anchor, CabinSpec, GridSpec};
use crate::likelihood::ObservationSigmas;
use crate::trajectory::{
    generate_boarding_walk, load_positions_csv, sample_uniform_positions, BoardingConfig, TagState,
};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionSource {
    #[default]
    Uniform,
    Boarding,
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridDims {
    fn default() -> Self {
        Self { rows: 62, cols: 62 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConditions {
    pub anchor: u32,
    pub p_los: f64,
    pub p_nlos: f64,
    pub p_outlier: f64,
    pub p_failure: f64,
}

impl AnchorConditions {
    pub fn model(&self) -> ConditionModel {
        ConditionModel {
            p_los: self.p_los,
            p_nlos: self.p_nlos,
            p_outlier: self.p_outlier,
            p_failure: self.p_failure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub samples: usize,
    pub positions: PositionSource,
    pub cabin: CabinSpec,
    pub anchors: Vec<Anchor>,
    pub grid: GridDims,
    pub error_model: ErrorModelParams,
    pub conditions: ConditionModel,
    pub anchor_conditions: Vec<AnchorConditions>,
    pub observation: ObservationSigmas,
    pub boarding: BoardingConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 1000,
            positions: PositionSource::Uniform,
            cabin: CabinSpec::default(),
            anchors: default_anchors(),
            grid: GridDims::default(),
            error_model: ErrorModelParams::default(),
            conditions: ConditionModel::default(),
            anchor_conditions: Vec::new(),
            observation: ObservationSigmas::default(),
            boarding: BoardingConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses and validates `path`; a relative CSV source becomes relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let PositionSource::Csv(p) = &mut cfg.positions {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.cabin.validate()?;
        self.grid_spec()?;
        self.error_model.validate()?;
        self.conditions.validate()?;
        self.observation.validate()?;
        if self.anchors.is_empty() {
            return Err(Error::InvalidConfig("at least one anchor is required".into()));
        }
        let mut ids: Vec<u32> = self.anchors.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("anchor ids must be unique".into()));
        }
        if let Some(a) = self
            .anchors
            .iter()
            .find(|a| !a.position.is_finite() || !self.cabin.contains(a.position))
        {
            return Err(Error::InvalidConfig(format!("anchor {} lies outside the cabin", a.id)));
        }
        for (i, o) in self.anchor_conditions.iter().enumerate() {
            if !self.anchors.iter().any(|a| a.id == o.anchor) {
                return Err(Error::InvalidConfig(format!(
                    "condition override for unknown anchor {}",
                    o.anchor
                )));
            }
            if self.anchor_conditions[..i].iter().any(|p| p.anchor == o.anchor) {
                return Err(Error::InvalidConfig(format!(
                    "anchor {} has two condition overrides",
                    o.anchor
                )));
            }
            o.model().validate()?;
        }
        if self.positions == PositionSource::Uniform && self.samples == 0 {
            return Err(Error::InvalidConfig("uniform positions need samples > 0".into()));
        }
        Ok(())
    }

    /// The override for `anchor_id` if present, else the scenario-wide
    /// model.
    pub fn conditions_for(&self, anchor_id: u32) -> ConditionModel {
        self.anchor_conditions
            .iter()
            .find(|o| o.anchor == anchor_id)
            .map(AnchorConditions::model)
            .unwrap_or(self.conditions)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.cabin, self.grid.rows, self.grid.cols)
    }

    /// Anchors in ascending id order, the order used for measurements and
    /// tensor channels.
    pub fn sorted_anchors(&self) -> Vec<Anchor> {
        let mut a = self.anchors.clone();
        a.sort_by_key(|a| a.id);
        a
    }

    /// Lowercase hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn tag_states(&self) -> Result<Vec<TagState>> {
        let mut states = match &self.positions {
            PositionSource::Uniform => return Ok(sample_uniform_positions(&self.cabin, self.samples, self.seed)),
            PositionSource::Boarding => generate_boarding_walk(&self.cabin, &self.boarding, self.seed)?,
            PositionSource::Csv(p) => load_positions_csv(p, &self.cabin)?,
        };
        if self.samples > 0 {
            states.truncate(self.samples);
        }
        Ok(states)
    }
}
