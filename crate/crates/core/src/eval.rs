//! Positioning-error metrics and residual histograms.

use serde::{Deserialize, Serialize};

use crate::channel::Measurement;
use crate::error::{Error, Result};
use crate::geometry::{true_bearing, true_range, wrap_angle, Anchor, Point2D};

fn check_pairs(pred: &[Point2D], truth: &[Point2D]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    Ok(())
}

pub fn euclidean_errors(pred: &[Point2D], truth: &[Point2D]) -> Result<Vec<f64>> {
    check_pairs(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| p.distance(*t)).collect())
}

fn sorted(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::Empty("no errors".into()));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::Contract("error list contains NaN".into()));
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One `(value, fraction <= value)` point per distinct value, ascending.
/// The last fraction is exactly 1.
pub fn ecdf(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    let v = sorted(errors)?;
    let n = v.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if i + 1 < n && v[i + 1] == x {
            continue;
        }
        out.push((x, if i + 1 == n { 1.0 } else { (i + 1) as f64 / n as f64 }));
    }
    Ok(out)
}

/// Nearest-rank percentile: the `ceil(p n / 100)`-th smallest value.
pub fn percentile(errors: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidConfig(format!("percentile {p} outside (0, 100]")));
    }
    let v = sorted(errors)?;
    Ok(v[nearest_rank(v.len(), p) - 1])
}

fn nearest_rank(n: usize, p: f64) -> usize {
    ((p * n as f64 / 100.0).ceil() as usize).clamp(1, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    /// Mean over all `2n` coordinates, squared meters.
    pub mse_m2: f64,
    /// `sqrt(mse_m2)`.
    pub rmse_m: f64,
    pub mean_m: f64,
    pub median_m: f64,
    pub p95_m: f64,
}

pub fn metrics_summary(pred: &[Point2D], truth: &[Point2D]) -> Result<MetricsSummary> {
    let errors = euclidean_errors(pred, truth)?;
    let n = errors.len();
    let sq: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p.x - t.x).powi(2) + (p.y - t.y).powi(2))
        .sum();
    let mse = sq / (2 * n) as f64;
    let v = sorted(&errors)?;
    Ok(MetricsSummary {
        n,
        mse_m2: mse,
        rmse_m: mse.sqrt(),
        mean_m: errors.iter().sum::<f64>() / n as f64,
        median_m: v[nearest_rank(n, 50.0) - 1],
        p95_m: v[nearest_rank(n, 95.0) - 1],
    })
}

/// Equal-width bins over `[lo, hi]`. Values outside the span are counted in
/// the end bins so the counts always add up to the number of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "histogram needs bins >= 1 and lo < hi, got {bins} over [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let left = self.lo + i as f64 * self.width();
        let right = if i + 1 == self.bins() {
            self.hi
        } else {
            self.lo + (i + 1) as f64 * self.width()
        };
        (left, right)
    }

    pub fn add(&mut self, v: f64) {
        let i = ((v - self.lo) / self.width()).floor();
        let i = if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins() - 1)
        };
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualSpans {
    pub range_lo: f64,
    pub range_hi: f64,
    pub angle_lo: f64,
    pub angle_hi: f64,
}

impl Default for ResidualSpans {
    fn default() -> Self {
        Self {
            range_lo: -5.0,
            range_hi: 25.0,
            angle_lo: -std::f64::consts::PI,
            angle_hi: std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualHistograms {
    /// Meters.
    pub range: Histogram,
    /// Radians, wrapped.
    pub angle: Histogram,
    pub valid: usize,
    pub range_mean: f64,
    pub angle_mean: f64,
}

/// Histograms of `measured - true` over every valid measurement.
/// `samples[i]` holds one tag's measurements and `truths[i]` its position.
pub fn residual_histograms(
    samples: &[Vec<Measurement>],
    truths: &[Point2D],
    anchors: &[Anchor],
    bins: usize,
    spans: &ResidualSpans,
) -> Result<ResidualHistograms> {
    if samples.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} measurement sets for {} positions",
            samples.len(),
            truths.len()
        )));
    }
    let mut range = Histogram::new(spans.range_lo, spans.range_hi, bins)?;
    let mut angle = Histogram::new(spans.angle_lo, spans.angle_hi, bins)?;
    let (mut valid, mut rsum, mut asum) = (0usize, 0.0, 0.0);
    for (ms, &tag) in samples.iter().zip(truths) {
        for m in ms.iter().filter(|m| m.is_valid()) {
            let anchor = anchors
                .iter()
                .find(|a| a.id == m.anchor_id)
                .ok_or_else(|| Error::Contract(format!("measurement from unknown anchor {}", m.anchor_id)))?;
            let (Some(r), Some(a)) = (m.range, m.angle) else {
                return Err(Error::Contract(format!(
                    "valid measurement from anchor {} lacks a value",
                    m.anchor_id
                )));
            };
            let dr = r - true_range(tag, anchor.position);
            let da = wrap_angle(a - true_bearing(tag, anchor.position).radians);
            range.add(dr);
            angle.add(da);
            rsum += dr;
            asum += da;
            valid += 1;
        }
    }
    if valid == 0 {
        return Err(Error::NoInformation("no valid measurements".into()));
    }
    Ok(ResidualHistograms {
        range,
        angle,
        valid,
        range_mean: rsum / valid as f64,
        angle_mean: asum / valid as f64,
    })
}
