//! CSV outputs. Every file has a header row; floats use the shortest
//! representation that reads back to the same value.
//!
//! | file      | columns                                                                  |
//! |-----------|--------------------------------------------------------------------------|
//! | loss      | epoch,train_loss,val_loss,val_rmse_m                                     |
//! | trials    | trial,optimizer,learning_rate,batch_size,dropout_rate,seed,val_loss,val_rmse_m,best_epoch,selected |
//! | ecdf      | error_m,fraction                                                         |
//! | residuals | kind,bin_left,bin_right,count (kind = range, in m, or angle, in rad)     |
//! | locate    | tag_id,time_step,true_x,true_y,est_x,est_y,error_m                       |
//!
//! In `locate`, a sample whose measurements all failed has empty estimate
//! and error cells.

use std::path::Path;

use serde::Serialize;

use super::container::write_atomic;
use crate::error::{Error, Result};
use crate::eval::{Histogram, ResidualHistograms};
use crate::geometry::Point2D;
use crate::hpo::TrialRecord;
use crate::optim::EpochRecord;
use crate::trajectory::TagState;

fn to_csv<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| Error::Contract(format!("csv encoding: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Contract(format!("csv encoding: {e}")))
}

pub const LOSS_HEADER: [&str; 4] = ["epoch", "train_loss", "val_loss", "val_rmse_m"];

pub fn loss_csv(epochs: &[EpochRecord]) -> Result<Vec<u8>> {
    to_csv(
        &LOSS_HEADER,
        epochs.iter().map(|e| (e.epoch, e.train_loss, e.val_loss, e.val_rmse_m)),
    )
}

pub const TRIALS_HEADER: [&str; 10] = [
    "trial",
    "optimizer",
    "learning_rate",
    "batch_size",
    "dropout_rate",
    "val_loss",
    "val_rmse_m",
    "seed",
    "best_epoch",
    "selected",
];

/// `best` indexes the selected trial.
pub fn trials_csv(trials: &[TrialRecord], best: usize) -> Result<Vec<u8>> {
    to_csv(
        &TRIALS_HEADER,
        trials.iter().enumerate().map(|(i, t)| {
            (
                t.trial,
                t.params.optimizer.to_string(),
                t.params.learning_rate,
                t.params.batch_size,
                t.params.dropout_rate,
                t.val_loss,
                t.val_rmse_m,
                t.seed,
                t.best_epoch,
                u8::from(i == best),
            )
        }),
    )
}

pub const ECDF_HEADER: [&str; 2] = ["error_m", "fraction"];

pub fn ecdf_csv(points: &[(f64, f64)]) -> Result<Vec<u8>> {
    to_csv(&ECDF_HEADER, points.iter().copied())
}

pub const RESIDUALS_HEADER: [&str; 4] = ["kind", "bin_left", "bin_right", "count"];

fn histogram_rows<'a>(kind: &'a str, h: &'a Histogram) -> impl Iterator<Item = (&'a str, f64, f64, u64)> + 'a {
    (0..h.bins()).map(move |i| {
        let (lo, hi) = h.edges(i);
        (kind, lo, hi, h.counts[i])
    })
}

/// Range rows first, then angle rows.
pub fn residuals_csv(h: &ResidualHistograms) -> Result<Vec<u8>> {
    to_csv(
        &RESIDUALS_HEADER,
        histogram_rows("range", &h.range).chain(histogram_rows("angle", &h.angle)),
    )
}

pub const LOCATE_HEADER: [&str; 7] = ["tag_id", "time_step", "true_x", "true_y", "est_x", "est_y", "error_m"];

pub fn locate_csv(states: &[TagState], estimates: &[Option<Point2D>]) -> Result<Vec<u8>> {
    if states.len() != estimates.len() {
        return Err(Error::Shape(format!(
            "{} states, {} estimates",
            states.len(),
            estimates.len()
        )));
    }
    to_csv(
        &LOCATE_HEADER,
        states.iter().zip(estimates).map(|(s, e)| {
            (
                s.tag_id,
                s.time_step,
                s.position.x,
                s.position.y,
                e.map(|p| p.x),
                e.map(|p| p.y),
                e.map(|p| p.distance(s.position)),
            )
        }),
    )
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Contract(format!("json encoding: {e}")))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
