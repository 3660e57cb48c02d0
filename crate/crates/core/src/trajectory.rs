//! Ground-truth tag positions.
//!
//! Three sources: i.i.d. uniform positions over the cabin, a simple boarding
//! walk (a stand-in for a full pedestrian boarding simulation), and CSV files
//! with externally produced reference positions.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CabinSpec, Point2D};
use crate::rng::{Purpose, RngStream};

pub const POSITIONS_CSV_HEADER: [&str; 4] = ["tag_id", "time_step", "x", "y"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagState {
    pub tag_id: u32,
    pub time_step: u32,
    pub position: Point2D,
}

/// Draws `count` positions uniformly over the cabin. Sample `i` uses its own
/// substream so the result does not depend on generation order.
pub fn sample_uniform_positions(cabin: &CabinSpec, count: usize, seed: u64) -> Vec<TagState> {
    (0..count)
        .map(|i| {
            let mut rng = RngStream::new(seed, Purpose::Positions, i as u64);
            let x = cabin.x_min + rng.random::<f64>() * cabin.width();
            let y = cabin.y_min + rng.random::<f64>() * cabin.height();
            TagState {
                tag_id: i as u32,
                time_step: 0,
                position: Point2D::new(x, y),
            }
        })
        .collect()
}

/// Layout knobs of the boarding proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoardingConfig {
    pub passengers: usize,
    /// Distance covered per time step, meters.
    pub step_length: f64,
    pub seats_per_row: usize,
}

impl Default for BoardingConfig {
    fn default() -> Self {
        Self {
            passengers: 148,
            step_length: 0.5,
            seats_per_row: 6,
        }
    }
}

/// Boarding proxy: passengers enter one per time step at the front door
/// (`x_min`, mid-width), walk down the centerline aisle to their row, then
/// step sideways into their seat. Seats are assigned by a seeded shuffle.
pub fn generate_boarding_walk(cabin: &CabinSpec, cfg: &BoardingConfig, seed: u64) -> Result<Vec<TagState>> {
    if cfg.passengers == 0 {
        return Err(Error::InvalidConfig("boarding needs at least one passenger".into()));
    }
    if !(cfg.step_length > 0.0) || cfg.seats_per_row == 0 || !cfg.seats_per_row.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "boarding needs a positive step length and an even seat count per row: {cfg:?}"
        )));
    }
    let rows = cfg.passengers.div_ceil(cfg.seats_per_row);
    let aisle_y = cabin.center().y;
    let door = Point2D::new(cabin.x_min, aisle_y);

    // rows spread over the cabin, leaving a galley at the front
    let first_row = cabin.x_min + 0.1 * cabin.width();
    let last_row = cabin.x_max - 0.05 * cabin.width();
    let row_x = |r: usize| {
        if rows == 1 {
            first_row
        } else {
            first_row + (last_row - first_row) * r as f64 / (rows - 1) as f64
        }
    };
    // seats per side at evenly spaced offsets between the wall and the aisle
    let per_side = cfg.seats_per_row / 2;
    let half = 0.5 * cabin.height();
    let seat_y = |s: usize| {
        let side = s / per_side;
        let k = (s % per_side) as f64 + 1.0;
        let offset = half * k / (per_side as f64 + 1.0) + 0.1 * half;
        let offset = offset.min(0.95 * half);
        if side == 0 {
            aisle_y - offset
        } else {
            aisle_y + offset
        }
    };

    let mut rng = RngStream::new(seed, Purpose::Boarding, 0);
    let mut seats: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cfg.seats_per_row).map(move |s| (r, s)))
        .collect();
    seats.shuffle(&mut rng);

    let mut states = Vec::new();
    for (p, &(row, seat)) in seats.iter().take(cfg.passengers).enumerate() {
        let target_x = row_x(row);
        let target_y = seat_y(seat);
        let mut t = p as u32;
        let mut pos = door;
        let mut push = |pos: Point2D, t: u32| {
            states.push(TagState {
                tag_id: p as u32,
                time_step: t,
                position: pos,
            })
        };
        push(pos, t);
        while pos.x < target_x {
            pos.x = (pos.x + cfg.step_length).min(target_x);
            t += 1;
            push(pos, t);
        }
        while pos.y != target_y {
            let dy = target_y - pos.y;
            if dy.abs() <= cfg.step_length {
                pos.y = target_y;
            } else {
                pos.y += dy.signum() * cfg.step_length;
            }
            t += 1;
            push(pos, t);
        }
    }
    Ok(states)
}

#[derive(Deserialize)]
struct CsvRow {
    tag_id: u32,
    time_step: u32,
    x: f64,
    y: f64,
}

/// Reads `tag_id,time_step,x,y` rows; data rows are numbered from 1.
pub fn load_positions_csv(path: &Path, cabin: &CabinSpec) -> Result<Vec<TagState>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_positions_csv(file, cabin)
}

pub fn read_positions_csv<R: std::io::Read>(reader: R, cabin: &CabinSpec) -> Result<Vec<TagState>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::CsvRow {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != POSITIONS_CSV_HEADER {
        return Err(Error::CsvRow {
            row: 0,
            message: format!("expected header tag_id,time_step,x,y, found {}", names.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::CsvRow {
            row,
            message: e.to_string(),
        })?;
        let p = Point2D::new(rec.x, rec.y);
        if !p.is_finite() || !cabin.contains(p) {
            return Err(Error::CsvOutOfBounds {
                row,
                x: rec.x,
                y: rec.y,
            });
        }
        out.push(TagState {
            tag_id: rec.tag_id,
            time_step: rec.time_step,
            position: p,
        });
    }
    Ok(out)
}
