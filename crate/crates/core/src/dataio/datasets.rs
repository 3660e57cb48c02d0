//! Measurement and tensor datasets on top of the container.
//!
//! Measurements (`kind = "measurements"`), `N` tag states and `K` anchors in
//! ascending id order:
//!
//! | array       | shape  | contents                                   |
//! |-------------|--------|--------------------------------------------|
//! | `positions` | [N, 2] | true x, y (m)                              |
//! | `tag_id`    | [N]    |                                            |
//! | `time_step` | [N]    |                                            |
//! | `range`     | [N, K] | measured range (m), NaN when missing       |
//! | `angle`     | [N, K] | measured bearing (rad), NaN when missing   |
//! | `condition` | [N, K] | 0 LOS, 1 NLOS, 2 outlier, 3 failure        |
//!
//! The header meta holds the full scenario and its digest.
//!
//! Tensors (`kind = "tensors"`): `inputs [N, C, H, W]`, `targets [N, 2]`,
//! `mask [N, C]`, with grid, sigmas, seed, digest, anchors and the channel
//! ordering in the meta.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::container::Container;
use super::scenario::ScenarioConfig;
use crate::channel::{ChannelCondition, Measurement};
use crate::dataset::TensorSet;
use crate::error::{Error, FormatError, Result};
use crate::geometry::{Anchor, GridSpec, Point2D};
use crate::likelihood::{ObservationSigmas, CHANNEL_ORDER};
use crate::trajectory::TagState;

pub const MEASUREMENTS_KIND: &str = "measurements";
pub const TENSORS_KIND: &str = "tensors";

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub scenario: ScenarioConfig,
    pub states: Vec<TagState>,
    /// `measurements[i]` holds one entry per anchor, ascending id.
    pub measurements: Vec<Vec<Measurement>>,
}

impl MeasurementSet {
    pub fn anchors(&self) -> Vec<Anchor> {
        self.scenario.sorted_anchors()
    }

    pub fn truths(&self) -> Vec<Point2D> {
        self.states.iter().map(|s| s.position).collect()
    }

    pub fn to_container(&self) -> Result<Container> {
        let anchors = self.anchors();
        let (n, k) = (self.states.len(), anchors.len());
        if self.measurements.len() != n || self.measurements.iter().any(|m| m.len() != k) {
            return Err(Error::Shape(format!("measurements do not form an {n} x {k} table")));
        }
        let mut positions = Vec::with_capacity(2 * n);
        let (mut range, mut angle, mut cond) = (Vec::new(), Vec::new(), Vec::new());
        for (s, ms) in self.states.iter().zip(&self.measurements) {
            positions.extend([s.position.x, s.position.y]);
            for (m, a) in ms.iter().zip(&anchors) {
                if m.anchor_id != a.id {
                    return Err(Error::Contract(format!(
                        "measurement for anchor {} in the slot of {}",
                        m.anchor_id, a.id
                    )));
                }
                range.push(m.range.unwrap_or(f64::NAN));
                angle.push(m.angle.unwrap_or(f64::NAN));
                cond.push(m.condition.code() as f64);
            }
        }
        let meta = json!({ "scenario": self.scenario, "scenario_digest": self.scenario.digest() });
        let mut c = Container::new(MEASUREMENTS_KIND, meta);
        c.push_f64("positions", &[n, 2], &positions)?;
        c.push("tag_id", &[n], self.states.iter().map(|s| s.tag_id as f32).collect())?;
        c.push(
            "time_step",
            &[n],
            self.states.iter().map(|s| s.time_step as f32).collect(),
        )?;
        c.push_f64("range", &[n, k], &range)?;
        c.push_f64("angle", &[n, k], &angle)?;
        c.push_f64("condition", &[n, k], &cond)?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> std::result::Result<Self, FormatError> {
        c.expect_kind(MEASUREMENTS_KIND)?;
        let scenario: ScenarioConfig = serde_json::from_value(c.meta["scenario"].clone())
            .map_err(|e| FormatError::Header(format!("scenario: {e}")))?;
        let anchors = scenario.sorted_anchors();
        let k = anchors.len();
        let n = c.get("tag_id")?.shape.first().copied().unwrap_or(0);
        let positions = c.get_shaped("positions", &[n, 2])?;
        let tag_id = c.get_shaped("tag_id", &[n])?;
        let time_step = c.get_shaped("time_step", &[n])?;
        let range = c.get_shaped("range", &[n, k])?;
        let angle = c.get_shaped("angle", &[n, k])?;
        let cond = c.get_shaped("condition", &[n, k])?;
        let opt = |v: f32| (!v.is_nan()).then_some(v as f64);
        let mut states = Vec::with_capacity(n);
        let mut measurements = Vec::with_capacity(n);
        for i in 0..n {
            states.push(TagState {
                tag_id: tag_id[i] as u32,
                time_step: time_step[i] as u32,
                position: Point2D::new(positions[2 * i] as f64, positions[2 * i + 1] as f64),
            });
            let mut row = Vec::with_capacity(k);
            for (j, a) in anchors.iter().enumerate() {
                let code = cond[i * k + j];
                let condition = ChannelCondition::from_code(code as u8)
                    .filter(|_| code.fract() == 0.0 && code >= 0.0)
                    .ok_or_else(|| FormatError::Mismatch(format!("bad condition code {code} at sample {i}")))?;
                let m = Measurement {
                    anchor_id: a.id,
                    range: opt(range[i * k + j]),
                    angle: opt(angle[i * k + j]),
                    condition,
                };
                if m.is_valid() != m.range.is_some() || m.is_valid() != m.angle.is_some() {
                    return Err(FormatError::Mismatch(format!(
                        "sample {i}, anchor {}: values disagree with condition",
                        a.id
                    )));
                }
                row.push(m);
            }
            measurements.push(row);
        }
        Ok(Self {
            scenario,
            states,
            measurements,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let c = Container::read(path)?;
        Self::from_container(&c).map_err(|e| Error::format(path, e))
    }
}

/// Provenance stored with a tensor dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub grid: GridSpec,
    pub sigmas: ObservationSigmas,
    pub anchors: Vec<Anchor>,
    pub seed: u64,
    pub scenario_digest: String,
    pub channel_order: String,
}

impl TensorMeta {
    pub fn new(
        grid: GridSpec,
        sigmas: ObservationSigmas,
        anchors: Vec<Anchor>,
        seed: u64,
        scenario_digest: String,
    ) -> Self {
        Self {
            grid,
            sigmas,
            anchors,
            seed,
            scenario_digest,
            channel_order: CHANNEL_ORDER.into(),
        }
    }
}

pub fn tensors_to_container(data: &TensorSet, meta: &TensorMeta) -> Result<Container> {
    data.validate()?;
    let n = data.len();
    let meta_json = serde_json::to_value(meta).map_err(|e| Error::Contract(e.to_string()))?;
    let mut c = Container::new(TENSORS_KIND, meta_json);
    c.push(
        "inputs",
        &[n, data.channels, data.height, data.width],
        data.inputs.clone(),
    )?;
    c.push("targets", &[n, 2], data.targets.clone())?;
    c.push("mask", &[n, data.channels], data.mask.clone())?;
    Ok(c)
}

/// Consumes the container so the (large) input array is moved, not copied.
pub fn tensors_from_container(mut c: Container) -> std::result::Result<(TensorSet, TensorMeta), FormatError> {
    c.expect_kind(TENSORS_KIND)?;
    let meta: TensorMeta =
        serde_json::from_value(c.meta.clone()).map_err(|e| FormatError::Header(format!("tensor meta: {e}")))?;
    let inputs = c.get("inputs")?;
    let [n, ch, h, w] = inputs.shape[..] else {
        return Err(FormatError::Mismatch(format!(
            "inputs has shape {:?}, expected 4 dims",
            inputs.shape
        )));
    };
    let mut set = TensorSet::new(ch, h, w);
    set.targets = c.get_shaped("targets", &[n, 2])?.to_vec();
    set.mask = c.get_shaped("mask", &[n, ch])?.to_vec();
    let slot = c.arrays.iter_mut().find(|a| a.name == "inputs").expect("checked above");
    set.inputs = std::mem::take(&mut slot.values);
    Ok((set, meta))
}

pub fn write_tensors(data: &TensorSet, meta: &TensorMeta, path: &Path) -> Result<()> {
    tensors_to_container(data, meta)?.write(path)
}

pub fn read_tensors(path: &Path) -> Result<(TensorSet, TensorMeta)> {
    let c = Container::read(path)?;
    tensors_from_container(c).map_err(|e| Error::format(path, e))
}
