//! Stochastic measurement generation.
//!
//! Each tag/anchor attempt first decides whether the measurement failed. A
//! valid attempt is then labelled LOS, NLOS or outlier, and additive errors
//! are drawn from that condition's models:
//!
//! | condition | range error            | angle error          |
//! |-----------|------------------------|----------------------|
//! | LOS       | N(0, sigma_r^2)        | N(0, sigma_theta^2)  |
//! | NLOS      | LogNormal(mu, sigma)   | U(-pi, pi)           |
//! | Outlier   | U(-d, d)               | U(-pi, pi)           |
//!
//! The LogNormal parameters describe the underlying normal in log space.

use std::f64::consts::PI;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{true_bearing, true_range, wrap_angle, Anchor, Point2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelCondition {
    Los,
    Nlos,
    Outlier,
    Failure,
}

impl ChannelCondition {
    pub const ALL: [ChannelCondition; 4] = [Self::Los, Self::Nlos, Self::Outlier, Self::Failure];

    /// Numeric code used in dataset files.
    pub fn code(self) -> u8 {
        match self {
            Self::Los => 0,
            Self::Nlos => 1,
            Self::Outlier => 2,
            Self::Failure => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

/// Categorical distribution over channel conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionModel {
    pub p_los: f64,
    pub p_nlos: f64,
    pub p_outlier: f64,
    pub p_failure: f64,
}

impl Default for ConditionModel {
    fn default() -> Self {
        Self {
            p_los: 0.70,
            p_nlos: 0.20,
            p_outlier: 0.05,
            p_failure: 0.05,
        }
    }
}

impl ConditionModel {
    pub fn new(p_los: f64, p_nlos: f64, p_outlier: f64, p_failure: f64) -> Result<Self> {
        let m = Self {
            p_los,
            p_nlos,
            p_outlier,
            p_failure,
        };
        m.validate()?;
        Ok(m)
    }

    /// All probability mass on one condition.
    pub fn pinned(condition: ChannelCondition) -> Self {
        let mut m = Self {
            p_los: 0.0,
            p_nlos: 0.0,
            p_outlier: 0.0,
            p_failure: 0.0,
        };
        match condition {
            ChannelCondition::Los => m.p_los = 1.0,
            ChannelCondition::Nlos => m.p_nlos = 1.0,
            ChannelCondition::Outlier => m.p_outlier = 1.0,
            ChannelCondition::Failure => m.p_failure = 1.0,
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_los, self.p_nlos, self.p_outlier, self.p_failure];
        if ps.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "condition probabilities must be finite and non-negative: {self:?}"
            )));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "condition probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorModelParams {
    /// LOS range noise std, meters.
    pub sigma_r_los: f64,
    /// LOS angle noise std, radians.
    pub sigma_theta_los: f64,
    /// NLOS log-normal location (log-meters).
    pub nlos_mu: f64,
    /// NLOS log-normal scale (log-meters).
    pub nlos_sigma: f64,
}

impl Default for ErrorModelParams {
    fn default() -> Self {
        Self {
            sigma_r_los: 0.3,
            sigma_theta_los: 3f64.to_radians(),
            nlos_mu: 0.8,
            nlos_sigma: 1.07,
        }
    }
}

impl ErrorModelParams {
    pub fn validate(&self) -> Result<()> {
        let vs = [self.sigma_r_los, self.sigma_theta_los, self.nlos_mu, self.nlos_sigma];
        if vs.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "error model parameters must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// One tag/anchor observation. Both values are absent iff the attempt failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub anchor_id: u32,
    pub range: Option<f64>,
    pub angle: Option<f64>,
    /// Diagnostic only; estimators must not look at it.
    pub condition: ChannelCondition,
}

impl Measurement {
    pub fn failed(anchor_id: u32) -> Self {
        Self {
            anchor_id,
            range: None,
            angle: None,
            condition: ChannelCondition::Failure,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.condition != ChannelCondition::Failure
    }
}

/// Whether error terms are drawn or forced to zero. `Disabled` exists for
/// oracle tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    Sampled,
    Disabled,
}

/// Failure is tested first, then LOS, NLOS, outlier in that order over a
/// single uniform draw.
pub fn draw_condition<R: Rng + ?Sized>(model: &ConditionModel, rng: &mut R) -> ChannelCondition {
    let u: f64 = rng.random();
    let mut edge = model.p_failure;
    if u < edge {
        return ChannelCondition::Failure;
    }
    edge += model.p_los;
    if u < edge {
        return ChannelCondition::Los;
    }
    edge += model.p_nlos;
    if u < edge {
        return ChannelCondition::Nlos;
    }
    if model.p_outlier > 0.0 {
        return ChannelCondition::Outlier;
    }
    // Rounding left u above the cumulative sum; fall back to the last
    // category that has mass.
    [
        (model.p_nlos, ChannelCondition::Nlos),
        (model.p_los, ChannelCondition::Los),
        (model.p_failure, ChannelCondition::Failure),
    ]
    .into_iter()
    .find(|(p, _)| *p > 0.0)
    .map(|(_, c)| c)
    .unwrap_or(ChannelCondition::Los)
}

pub fn sample_range_error<R: Rng + ?Sized>(
    condition: ChannelCondition,
    distance: f64,
    params: &ErrorModelParams,
    rng: &mut R,
) -> Result<f64> {
    if !(distance >= 0.0) {
        return Err(Error::Contract(format!(
            "range error needs a non-negative distance, got {distance}"
        )));
    }
    let e = match condition {
        ChannelCondition::Los => Normal::new(0.0, params.sigma_r_los)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .sample(rng),
        ChannelCondition::Nlos => LogNormal::new(params.nlos_mu, params.nlos_sigma)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .sample(rng),
        ChannelCondition::Outlier => Uniform::new_inclusive(-distance, distance)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .sample(rng),
        ChannelCondition::Failure => {
            return Err(Error::Contract("no range error exists for a failed measurement".into()))
        }
    };
    Ok(e)
}

pub fn sample_angle_error<R: Rng + ?Sized>(
    condition: ChannelCondition,
    params: &ErrorModelParams,
    rng: &mut R,
) -> Result<f64> {
    let e = match condition {
        ChannelCondition::Los => Normal::new(0.0, params.sigma_theta_los)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .sample(rng),
        ChannelCondition::Nlos | ChannelCondition::Outlier => Uniform::new(-PI, PI)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .sample(rng),
        ChannelCondition::Failure => {
            return Err(Error::Contract("no angle error exists for a failed measurement".into()))
        }
    };
    Ok(e)
}

/// Draws a condition from `model`, then the matching errors.
pub fn simulate_measurement<R: Rng + ?Sized>(
    tag: Point2D,
    anchor: &Anchor,
    model: &ConditionModel,
    params: &ErrorModelParams,
    rng: &mut R,
) -> Measurement {
    let condition = draw_condition(model, rng);
    measure_with_condition(tag, anchor, condition, params, Noise::Sampled, rng)
}

/// Produces a measurement under a given condition. Range is clamped at 0 and
/// angle wrapped into (-pi, pi].
pub fn measure_with_condition<R: Rng + ?Sized>(
    tag: Point2D,
    anchor: &Anchor,
    condition: ChannelCondition,
    params: &ErrorModelParams,
    noise: Noise,
    rng: &mut R,
) -> Measurement {
    if condition == ChannelCondition::Failure {
        return Measurement::failed(anchor.id);
    }
    let d = true_range(tag, anchor.position);
    let theta = true_bearing(tag, anchor.position).radians;
    let (er, ea) = match noise {
        Noise::Disabled => (0.0, 0.0),
        // condition is not Failure and d >= 0, so neither call can fail
        Noise::Sampled => (
            sample_range_error(condition, d, params, rng).unwrap_or(0.0),
            sample_angle_error(condition, params, rng).unwrap_or(0.0),
        ),
    };
    Measurement {
        anchor_id: anchor.id,
        range: Some((d + er).max(0.0)),
        angle: Some(wrap_angle(theta + ea)),
        condition,
    }
}
