//! Network-free position estimates from a fused likelihood field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point2D};
use crate::likelihood::Field;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEstimate {
    pub position: Point2D,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Argmax,
    Centroid,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(Method::Argmax),
            "centroid" => Ok(Method::Centroid),
            other => Err(Error::InvalidConfig(format!("unknown locate method {other:?}"))),
        }
    }
}

fn check_shape(field: &Field, grid: &GridSpec) -> Result<()> {
    if field.rows != grid.rows || field.cols != grid.cols || field.values.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{}x{} field on a {}x{} grid",
            field.rows, field.cols, grid.rows, grid.cols
        )));
    }
    Ok(())
}

/// Center of the maximizing cell. Ties go to the smallest `(row, col)`.
pub fn argmax_position(field: &Field, grid: &GridSpec) -> Result<CellEstimate> {
    check_shape(field, grid)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in field.values.iter().enumerate() {
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (i, _) = best.ok_or_else(|| Error::NoInformation("likelihood field has no positive cell".into()))?;
    let (row, col) = (i / grid.cols, i % grid.cols);
    Ok(CellEstimate {
        position: grid.center_unchecked(row, col),
        row,
        col,
    })
}

/// Likelihood-weighted mean of the cell centers.
pub fn weighted_centroid(field: &Field, grid: &GridSpec) -> Result<Point2D> {
    check_shape(field, grid)?;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (c, &w) in grid.centers().zip(&field.values) {
        if w > 0.0 {
            sw += w;
            sx += w * c.x;
            sy += w * c.y;
        }
    }
    if !(sw > 0.0) || !sw.is_finite() {
        return Err(Error::NoInformation("likelihood field sums to zero".into()));
    }
    Ok(Point2D::new(sx / sw, sy / sw))
}

/// Estimates from an (unnormalized) log-likelihood field. The field is
/// shifted so its maximum is 0 before exponentiating, which leaves both
/// estimators unchanged and avoids underflow.
pub fn locate_from_log(log_field: &[f64], grid: &GridSpec, method: Method) -> Result<Point2D> {
    let field = Field::from_log_normalized(grid.rows, grid.cols, log_field)?;
    match method {
        Method::Argmax => argmax_position(&field, grid).map(|e| e.position),
        Method::Centroid => weighted_centroid(&field, grid),
    }
}
