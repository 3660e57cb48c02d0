//! Planar cabin geometry: points, anchors, the cabin rectangle and the
//! uniform grid laid over it.
//!
//! Grid convention: row index `m` runs along y, column index `n` along x, and
//! a cell's value lives at its center.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2D) -> f64 {
        true_range(self, other)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: u32,
    pub position: Point2D,
}

impl Anchor {
    pub const fn new(id: u32, x: f64, y: f64) -> Self {
        Self {
            id,
            position: Point2D::new(x, y),
        }
    }
}

/// Axis-aligned cabin floor rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CabinSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for CabinSpec {
    /// Single-aisle cabin floor, 30 m x 3.5 m.
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 30.0,
            y_min: 0.0,
            y_max: 3.5,
        }
    }
}

impl CabinSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let cabin = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        cabin.validate()?;
        Ok(cabin)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::InvalidConfig(format!(
                "cabin bounds must satisfy x_min < x_max and y_min < y_max, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point2D {
        Point2D::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: Point2D) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Eight anchors on two lines along the cabin walls.
pub fn default_anchors() -> Vec<Anchor> {
    let xs = [3.0, 11.0, 19.0, 27.0];
    let ys = [0.2, 3.3];
    let mut anchors = Vec::with_capacity(8);
    for (i, &y) in ys.iter().enumerate() {
        for (j, &x) in xs.iter().enumerate() {
            anchors.push(Anchor::new((i * xs.len() + j) as u32, x, y));
        }
    }
    anchors
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: CabinSpec,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(bounds: CabinSpec, rows: usize, cols: usize) -> Result<Self> {
        let grid = Self { bounds, rows, cols };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2x2 cells, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn cell_width(&self) -> f64 {
        self.bounds.width() / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.bounds.height() / self.rows as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_width().hypot(self.cell_height())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Result<Point2D> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::IndexOutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.center_unchecked(row, col))
    }

    pub(crate) fn center_unchecked(&self, row: usize, col: usize) -> Point2D {
        Point2D::new(
            self.bounds.x_min + (col as f64 + 0.5) * self.cell_width(),
            self.bounds.y_min + (row as f64 + 0.5) * self.cell_height(),
        )
    }

    /// Cell `(row, col)` containing `p`. Points on the upper/right boundary
    /// clamp into the last cell.
    pub fn containing_cell(&self, p: Point2D) -> Result<(usize, usize)> {
        if !p.is_finite() || !self.bounds.contains(p) {
            return Err(Error::OutOfDomain { x: p.x, y: p.y });
        }
        let col = ((p.x - self.bounds.x_min) / self.cell_width()).floor() as usize;
        let row = ((p.y - self.bounds.y_min) / self.cell_height()).floor() as usize;
        Ok((row.min(self.rows - 1), col.min(self.cols - 1)))
    }

    /// All cell centers in row-major order.
    pub fn centers(&self) -> impl Iterator<Item = Point2D> + '_ {
        (0..self.rows).flat_map(move |m| (0..self.cols).map(move |n| self.center_unchecked(m, n)))
    }
}

/// Euclidean tag-anchor distance.
pub fn true_range(tag: Point2D, anchor: Point2D) -> f64 {
    (tag.x - anchor.x).hypot(tag.y - anchor.y)
}

/// Azimuth of the tag as seen from the anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing {
    pub radians: f64,
    /// Set when tag and anchor coincide; `radians` is then 0 by convention.
    pub degenerate: bool,
}

pub fn true_bearing(tag: Point2D, anchor: Point2D) -> Bearing {
    let dy = tag.y - anchor.y;
    let dx = tag.x - anchor.x;
    if dx == 0.0 && dy == 0.0 {
        return Bearing {
            radians: 0.0,
            degenerate: true,
        };
    }
    Bearing {
        radians: wrap_angle(dy.atan2(dx)),
        degenerate: false,
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::FRAC_PI_4;

    fn small_grid() -> GridSpec {
        GridSpec::new(CabinSpec::new(0.0, 10.0, 0.0, 4.0).unwrap(), 4, 10).unwrap()
    }

    #[test]
    fn range_examples() {
        assert_eq!(true_range(Point2D::new(3.0, 4.0), Point2D::new(0.0, 0.0)), 5.0);
        assert_eq!(true_range(Point2D::new(1.5, 2.5), Point2D::new(1.5, 2.5)), 0.0);
        // sqrt(900 + 12.25)
        assert_relative_eq!(
            true_range(Point2D::new(30.0, 3.5), Point2D::new(0.0, 0.0)),
            30.203_476_621_077_9,
            epsilon = 1e-9
        );
    }

    #[test]
    fn bearing_examples() {
        let o = Point2D::new(0.0, 0.0);
        assert_relative_eq!(true_bearing(Point2D::new(1.0, 1.0), o).radians, FRAC_PI_4);
        assert_eq!(true_bearing(Point2D::new(-1.0, 0.0), o).radians, PI);
        assert_relative_eq!(true_bearing(Point2D::new(0.0, -2.0), o).radians, -FRAC_PI_2);
        let b = true_bearing(o, o);
        assert!(b.degenerate);
        assert_eq!(b.radians, 0.0);
    }

    #[test]
    fn wrap_examples() {
        assert_relative_eq!(wrap_angle(TAU), 0.0);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(1.5 * PI), -FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-1e-300), -1e-300);
        assert_relative_eq!(wrap_angle(-3.0 * PI), PI, epsilon = 1e-12);
    }

    #[test]
    fn cell_center_examples() {
        let g = small_grid();
        assert_eq!(g.cell_center(0, 0).unwrap(), Point2D::new(0.5, 0.5));
        assert_eq!(g.cell_center(3, 9).unwrap(), Point2D::new(9.5, 3.5));
        assert!(matches!(g.cell_center(4, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(g.cell_center(0, 10), Err(Error::IndexOutOfRange { .. })));

        let cabin = GridSpec::new(CabinSpec::default(), 62, 62).unwrap();
        let c = cabin.cell_center(0, 0).unwrap();
        assert_relative_eq!(c.x, 0.241_935_483_87, epsilon = 1e-10);
        assert_relative_eq!(c.y, 0.028_225_806_45, epsilon = 1e-10);
    }

    #[test]
    fn containing_cell_examples() {
        let g = small_grid();
        assert_eq!(g.containing_cell(Point2D::new(0.5, 0.5)).unwrap(), (0, 0));
        assert_eq!(g.containing_cell(Point2D::new(10.0, 4.0)).unwrap(), (3, 9));
        assert_eq!(g.containing_cell(Point2D::new(9.49, 3.49)).unwrap(), (3, 9));
        assert!(matches!(
            g.containing_cell(Point2D::new(10.01, 1.0)),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(g.containing_cell(Point2D::new(f64::NAN, 1.0)).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(CabinSpec::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(CabinSpec::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(GridSpec::new(CabinSpec::default(), 1, 10).is_err());
    }

    #[test]
    fn default_layout_has_eight_unique_anchors_inside_cabin() {
        let anchors = default_anchors();
        assert_eq!(anchors.len(), 8);
        let cabin = CabinSpec::default();
        for (i, a) in anchors.iter().enumerate() {
            assert_eq!(a.id as usize, i);
            assert!(cabin.contains(a.position));
        }
    }

    #[test]
    fn every_center_maps_back_to_its_cell() {
        for (rows, cols) in [(4, 10), (62, 62), (128, 128), (7, 3)] {
            let g = GridSpec::new(CabinSpec::default(), rows, cols).unwrap();
            for m in 0..rows {
                for n in 0..cols {
                    let c = g.cell_center(m, n).unwrap();
                    assert_eq!(g.containing_cell(c).unwrap(), (m, n));
                }
            }
        }
    }

    fn coord() -> impl Strategy<Value = f64> {
        -50.0..50.0f64
    }

    proptest! {
        #[test]
        fn range_symmetric_and_triangle(ax in coord(), ay in coord(), bx in coord(), by in coord(), cx in coord(), cy in coord()) {
            let (a, b, c) = (Point2D::new(ax, ay), Point2D::new(bx, by), Point2D::new(cx, cy));
            prop_assert_eq!(true_range(a, b), true_range(b, a));
            prop_assert!(true_range(a, c) <= true_range(a, b) + true_range(b, c) + 1e-12);
        }

        #[test]
        fn bearing_reverses_by_pi(ax in coord(), ay in coord(), bx in coord(), by in coord()) {
            let (t, a) = (Point2D::new(ax, ay), Point2D::new(bx, by));
            prop_assume!(t != a);
            let forward = true_bearing(t, a).radians;
            let back = wrap_angle(true_bearing(a, t).radians + PI);
            prop_assert!(wrap_angle(forward - back).abs() < 1e-12);
        }

        #[test]
        fn wrap_idempotent_and_periodic(a in -100.0..100.0f64, k in -20i32..20) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w), w);
            let shifted = wrap_angle(a + TAU * k as f64);
            prop_assert!(wrap_angle(shifted - w).abs() < 1e-9);
        }
    }
}
