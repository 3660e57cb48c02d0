//! Range and angle likelihood grid maps.
//!
//! For every cell center and anchor the *known terms* are the range and
//! bearing an ideal measurement would report. A measurement's residual
//! against those terms goes through a Gaussian kernel
//! `exp(-r^2 / (2 sigma^2))`, giving a map with values in `[0, 1]` that peaks
//! where the residual vanishes. Maps from independent measurements combine by
//! cellwise product, which is evaluated as a sum of logs.
//!
//! Network inputs stack the maps as channels: channel `2k` holds the range
//! map of the k-th anchor (ascending id), channel `2k + 1` its angle map. A
//! failed measurement contributes an all-zero placeholder channel; such
//! placeholders never enter a fusion.

use serde::{Deserialize, Serialize};

use crate::channel::Measurement;
use crate::error::{Error, Result};
use crate::geometry::{true_bearing, true_range, wrap_angle, Anchor, GridSpec, Point2D};

/// Kernel values below this are stored as exactly zero.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

pub const CHANNEL_ORDER: &str = "per anchor in ascending id order: channel 2k = range map, channel 2k+1 = angle map";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Range,
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSigmas {
    /// meters
    pub sigma_r: f64,
    /// radians
    pub sigma_theta: f64,
}

impl Default for ObservationSigmas {
    fn default() -> Self {
        Self {
            sigma_r: 0.3,
            sigma_theta: 3f64.to_radians(),
        }
    }
}

impl ObservationSigmas {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r > 0.0 && self.sigma_r.is_finite())
            || !(self.sigma_theta > 0.0 && self.sigma_theta.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "observation sigmas must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodGrid {
    pub grid: GridSpec,
    pub anchor_id: u32,
    pub kind: MapKind,
    /// Row-major `rows x cols`.
    pub values: Vec<f64>,
    /// All-zero stand-in for a failed measurement.
    pub placeholder: bool,
}

impl LikelihoodGrid {
    pub fn placeholder(grid: GridSpec, anchor_id: u32, kind: MapKind) -> Self {
        Self {
            grid,
            anchor_id,
            kind,
            values: vec![0.0; grid.len()],
            placeholder: true,
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.cols + col]
    }
}

/// Known range term for every cell of `grid`, row-major.
pub fn known_range_grid(grid: &GridSpec, anchor: &Anchor) -> Vec<f64> {
    grid.centers().map(|c| true_range(c, anchor.position)).collect()
}

/// Known bearing term for every cell of `grid`, row-major. A cell whose
/// center coincides with the anchor gets bearing 0.
pub fn known_angle_grid(grid: &GridSpec, anchor: &Anchor) -> Vec<f64> {
    grid.centers()
        .map(|c| true_bearing(c, anchor.position).radians)
        .collect()
}

fn kernel(residual: f64, sigma: f64) -> f64 {
    let v = (-(residual * residual) / (2.0 * sigma * sigma)).exp();
    if v < FLUSH_THRESHOLD {
        0.0
    } else {
        v
    }
}

fn check_known(grid: &GridSpec, known: &[f64]) -> Result<()> {
    if known.len() != grid.len() {
        return Err(Error::Shape(format!(
            "known-term grid has {} cells, grid spec has {}",
            known.len(),
            grid.len()
        )));
    }
    Ok(())
}

pub fn range_likelihood_grid(
    grid: &GridSpec,
    anchor_id: u32,
    known: &[f64],
    d_hat: f64,
    sigma_r: f64,
) -> Result<LikelihoodGrid> {
    check_known(grid, known)?;
    if !(d_hat >= 0.0) || !(sigma_r > 0.0) {
        return Err(Error::Contract(format!(
            "range map needs d_hat >= 0 and sigma_r > 0 (got {d_hat}, {sigma_r})"
        )));
    }
    Ok(LikelihoodGrid {
        grid: *grid,
        anchor_id,
        kind: MapKind::Range,
        values: known.iter().map(|k| kernel(k - d_hat, sigma_r)).collect(),
        placeholder: false,
    })
}

/// The residual is wrapped into (-pi, pi] before squaring.
pub fn angle_likelihood_grid(
    grid: &GridSpec,
    anchor_id: u32,
    known: &[f64],
    theta_hat: f64,
    sigma_theta: f64,
) -> Result<LikelihoodGrid> {
    check_known(grid, known)?;
    if !theta_hat.is_finite() || !(sigma_theta > 0.0) {
        return Err(Error::Contract(format!(
            "angle map needs a finite theta_hat and sigma_theta > 0 (got {theta_hat}, {sigma_theta})"
        )));
    }
    Ok(LikelihoodGrid {
        grid: *grid,
        anchor_id,
        kind: MapKind::Angle,
        values: known
            .iter()
            .map(|k| kernel(wrap_angle(k - theta_hat), sigma_theta))
            .collect(),
        placeholder: false,
    })
}

/// Unflushed log-likelihood `-r^2 / (2 sigma^2)` of a range measurement.
pub fn range_log_likelihood(known: &[f64], d_hat: f64, sigma_r: f64) -> Vec<f64> {
    let s = 2.0 * sigma_r * sigma_r;
    known.iter().map(|k| -(k - d_hat).powi(2) / s).collect()
}

/// Unflushed log-likelihood of an angle measurement (wrapped residual).
pub fn angle_log_likelihood(known: &[f64], theta_hat: f64, sigma_theta: f64) -> Vec<f64> {
    let s = 2.0 * sigma_theta * sigma_theta;
    known.iter().map(|k| -wrap_angle(k - theta_hat).powi(2) / s).collect()
}

/// Row-major `rows x cols` scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} field",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// `exp(log_field - max)`: the field rescaled so that its peak is 1.
    pub fn from_log_normalized(rows: usize, cols: usize, log_values: &[f64]) -> Result<Self> {
        let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NoInformation("log field has no finite maximum".into()));
        }
        Self::new(rows, cols, log_values.iter().map(|l| (l - max).exp()).collect())
    }
}

/// Cellwise sum of the logs of the given maps. Zero cells give `-inf`.
pub fn fuse_log(grids: &[LikelihoodGrid]) -> Result<Vec<f64>> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Empty("no likelihood maps to fuse".into()))?;
    let mut acc = vec![0.0; first.grid.len()];
    for g in grids {
        if g.grid != first.grid {
            return Err(Error::Shape(format!(
                "cannot fuse maps on different grids ({:?} vs {:?})",
                g.grid, first.grid
            )));
        }
        if g.placeholder {
            return Err(Error::Contract(format!(
                "placeholder map for anchor {} cannot be fused",
                g.anchor_id
            )));
        }
        for (a, v) in acc.iter_mut().zip(&g.values) {
            *a += v.ln();
        }
    }
    Ok(acc)
}

/// Cellwise product of the maps, computed in the log domain.
pub fn fuse_grids(grids: &[LikelihoodGrid]) -> Result<Field> {
    let log = fuse_log(grids)?;
    let grid = grids[0].grid;
    Field::new(grid.rows, grid.cols, log.into_iter().map(f64::exp).collect())
}

/// Network input: `2K x rows x cols` likelihood channels plus the true
/// position and a per-anchor `[range_valid, angle_valid]` mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub target: Point2D,
    pub mask: Vec<[bool; 2]>,
}

impl SampleTensor {
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.values[c * plane..(c + 1) * plane]
    }
}

/// Known terms of one anchor, computed once per grid and shared.
#[derive(Debug, Clone)]
pub struct KnownTerms {
    pub anchor: Anchor,
    pub range: Vec<f64>,
    pub angle: Vec<f64>,
}

/// Builds maps and stacked samples for a fixed grid, anchor set and kernel
/// widths.
#[derive(Debug, Clone)]
pub struct MapBuilder {
    grid: GridSpec,
    sigmas: ObservationSigmas,
    known: Vec<KnownTerms>,
}

impl MapBuilder {
    pub fn new(grid: GridSpec, anchors: &[Anchor], sigmas: ObservationSigmas) -> Result<Self> {
        grid.validate()?;
        sigmas.validate()?;
        let mut sorted = anchors.to_vec();
        sorted.sort_by_key(|a| a.id);
        if sorted.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidConfig("duplicate anchor ids".into()));
        }
        let known = sorted
            .iter()
            .map(|a| KnownTerms {
                anchor: *a,
                range: known_range_grid(&grid, a),
                angle: known_angle_grid(&grid, a),
            })
            .collect();
        Ok(Self { grid, sigmas, known })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sigmas(&self) -> &ObservationSigmas {
        &self.sigmas
    }

    pub fn known(&self) -> &[KnownTerms] {
        &self.known
    }

    pub fn channels(&self) -> usize {
        2 * self.known.len()
    }

    /// Pairs each measurement with its anchor's known terms. Measurements
    /// must be one per anchor, ordered by ascending anchor id.
    fn align<'a>(
        &'a self,
        measurements: &'a [Measurement],
    ) -> Result<impl Iterator<Item = (&'a KnownTerms, &'a Measurement)>> {
        if measurements.windows(2).any(|w| w[0].anchor_id == w[1].anchor_id) {
            return Err(Error::Contract("duplicate anchor ids among measurements".into()));
        }
        if measurements.len() != self.known.len() {
            return Err(Error::Shape(format!(
                "{} measurements for {} anchors",
                measurements.len(),
                self.known.len()
            )));
        }
        for (k, m) in self.known.iter().zip(measurements) {
            if k.anchor.id != m.anchor_id {
                return Err(Error::Contract(format!(
                    "measurement for anchor {} found in the slot of anchor {}",
                    m.anchor_id, k.anchor.id
                )));
            }
        }
        Ok(self.known.iter().zip(measurements))
    }

    /// Likelihood maps of every present range/angle value; failed parts are
    /// skipped.
    pub fn valid_maps(&self, measurements: &[Measurement]) -> Result<Vec<LikelihoodGrid>> {
        let mut maps = Vec::new();
        for (k, m) in self.align(measurements)? {
            if let Some(r) = m.range {
                maps.push(range_likelihood_grid(
                    &self.grid,
                    k.anchor.id,
                    &k.range,
                    r,
                    self.sigmas.sigma_r,
                )?);
            }
            if let Some(a) = m.angle {
                maps.push(angle_likelihood_grid(
                    &self.grid,
                    k.anchor.id,
                    &k.angle,
                    a,
                    self.sigmas.sigma_theta,
                )?);
            }
        }
        Ok(maps)
    }

    /// Unflushed fused log-likelihood over all present measurement parts.
    pub fn fused_log_field(&self, measurements: &[Measurement]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.grid.len()];
        let mut any = false;
        for (k, m) in self.align(measurements)? {
            if let Some(r) = m.range {
                any = true;
                for (a, l) in acc
                    .iter_mut()
                    .zip(range_log_likelihood(&k.range, r, self.sigmas.sigma_r))
                {
                    *a += l;
                }
            }
            if let Some(t) = m.angle {
                any = true;
                for (a, l) in acc
                    .iter_mut()
                    .zip(angle_log_likelihood(&k.angle, t, self.sigmas.sigma_theta))
                {
                    *a += l;
                }
            }
        }
        if !any {
            return Err(Error::NoInformation("every measurement failed".into()));
        }
        Ok(acc)
    }

    pub fn stack_sample(&self, measurements: &[Measurement], target: Point2D) -> Result<SampleTensor> {
        let plane = self.grid.len();
        let mut values = vec![0f32; self.channels() * plane];
        let mut mask = Vec::with_capacity(self.known.len());
        for (i, (k, m)) in self.align(measurements)?.enumerate() {
            let (range_ch, rest) = values[2 * i * plane..(2 * i + 2) * plane].split_at_mut(plane);
            if let Some(r) = m.range {
                let g = range_likelihood_grid(&self.grid, k.anchor.id, &k.range, r, self.sigmas.sigma_r)?;
                for (dst, v) in range_ch.iter_mut().zip(&g.values) {
                    *dst = *v as f32;
                }
            }
            if let Some(a) = m.angle {
                let g = angle_likelihood_grid(&self.grid, k.anchor.id, &k.angle, a, self.sigmas.sigma_theta)?;
                for (dst, v) in rest.iter_mut().zip(&g.values) {
                    *dst = *v as f32;
                }
            }
            mask.push([m.range.is_some(), m.angle.is_some()]);
        }
        Ok(SampleTensor {
            channels: self.channels(),
            height: self.grid.rows,
            width: self.grid.cols,
            values,
            target,
            mask,
        })
    }
}

/// One-shot convenience over [`MapBuilder::stack_sample`].
pub fn stack_sample(
    measurements: &[Measurement],
    anchors: &[Anchor],
    grid: &GridSpec,
    sigmas: &ObservationSigmas,
    target: Point2D,
) -> Result<SampleTensor> {
    MapBuilder::new(*grid, anchors, *sigmas)?.stack_sample(measurements, target)
}
