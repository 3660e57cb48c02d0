//! Optimizers and the training loop.

use std::fmt;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::TensorSet;
use crate::error::{Error, Result};
use crate::nn::{mse_loss, Mode, ModelState};
use crate::rng::{Purpose, RngStream};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const RHO: f64 = 0.9;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[serde(alias = "Adam")]
    Adam,
    #[serde(alias = "Adamax")]
    Adamax,
    #[serde(alias = "Adagrad")]
    Adagrad,
    #[serde(alias = "RMSprop")]
    Rmsprop,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [Self::Adam, Self::Adamax, Self::Adagrad, Self::Rmsprop];
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adam => "Adam",
            Self::Adamax => "Adamax",
            Self::Adagrad => "Adagrad",
            Self::Rmsprop => "RMSprop",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown optimizer {s:?}")))
    }
}

/// Per-parameter moment buffers. `first` is Adam/Adamax's `m`; `second` is
/// `v` (Adam, RMSprop), `u` (Adamax) or the running sum `G` (Adagrad).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, shapes: &[usize]) -> Self {
        Self {
            kind,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model(kind: OptimizerKind, model: &ModelState) -> Self {
        let sizes: Vec<usize> = model.trainable().iter().map(|a| a.len()).collect();
        Self::new(kind, &sizes)
    }
}

/// One update at step `t` (1-based). Nothing is modified when a gradient
/// is non-finite or shapes disagree.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut [&mut Vec<f64>],
    grads: &[&[f64]],
    lr: f64,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Contract("optimizer steps are counted from 1".into()));
    }
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape(format!(
            "{} parameter arrays, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || state.first[i].len() != g.len() {
            return Err(Error::Shape(format!(
                "parameter array {i}: {} values, {} gradients",
                p.len(),
                g.len()
            )));
        }
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(format!(
                "parameter array {i}, element {j} = {}",
                g[j]
            )));
        }
    }
    let t = t as f64;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for j in 0..g.len() {
            let gj = g[j];
            match state.kind {
                OptimizerKind::Adam => {
                    m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                    v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                    p[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + EPS);
                }
                OptimizerKind::Adamax => {
                    m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                    v[j] = (BETA2 * v[j]).max(gj.abs());
                    p[j] -= lr / bc1 * m[j] / (v[j] + EPS);
                }
                OptimizerKind::Adagrad => {
                    v[j] += gj * gj;
                    p[j] -= lr * gj / (v[j].sqrt() + EPS);
                }
                OptimizerKind::Rmsprop => {
                    v[j] = RHO * v[j] + (1.0 - RHO) * gj * gj;
                    p[j] -= lr * gj / (v[j].sqrt() + EPS);
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub test_fraction: f64,
    pub seed: u64,
    /// Seed of the train/validation split; `seed` when absent.
    pub split_seed: Option<u64>,
    /// Start the output bias at the mean training target (fresh models
    /// only).
    pub init_output_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            dropout_rate: 0.2,
            epochs: 50,
            test_fraction: 0.25,
            seed: 0,
            split_seed: None,
            init_output_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch size {} must be at least 2",
                self.batch_size
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("at least one epoch is required".into()));
        }
        crate::nn::layers::check_dropout_rate(self.dropout_rate)
    }

    pub fn effective_split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed)
    }

    /// `(train, validation)` indices for a dataset of `n` samples.
    pub fn split(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        split_indices(n, self.test_fraction, self.effective_split_seed())
    }
}

/// Seeded shuffle of `0..n`, then the first `round(n * test_fraction)`
/// indices (at least one, at most `n - 1`) form the test set. Returns
/// `(train, test)`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::InvalidConfig(format!(
            "need at least 4 samples to split, got {n}"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed, Purpose::Split, 0));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let train = idx.split_off(n_test);
    Ok((train, idx))
}

pub fn split_dataset<T: Clone>(samples: &[T], test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (train, test) = split_indices(samples.len(), test_fraction, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

/// Consecutive batches; a trailing batch of one sample is merged into the
/// previous one because train-mode batch norm needs two.
pub fn minibatches(indices: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = indices.chunks(batch_size.max(1)).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().expect("non-empty") = &indices[start..];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Squared meters.
    pub train_loss: f64,
    pub val_loss: f64,
    /// `sqrt(val_loss)`, meters.
    pub val_rmse_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_checkpoint: Option<PathBuf>,
    pub train_size: usize,
    pub val_size: usize,
}

/// Eval-mode MSE over `indices`, in chunks.
pub fn evaluate_loss(model: &ModelState, data: &TensorSet, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let mut sum = 0.0;
    for chunk in indices.chunks(64) {
        let (x, y) = data.batch(chunk);
        let (l, _) = mse_loss(&model.predict(&x)?, &y)?;
        sum += l * chunk.len() as f64;
    }
    Ok(sum / indices.len() as f64)
}

pub fn check_dataset(model: &ModelState, data: &TensorSet) -> Result<()> {
    data.validate()?;
    let c = &model.config;
    if (data.channels, data.height, data.width) != (c.input_channels, c.input_height, c.input_width) {
        return Err(Error::Shape(format!(
            "dataset samples are {}x{}x{}, model expects {}x{}x{}",
            data.channels, data.height, data.width, c.input_channels, c.input_height, c.input_width
        )));
    }
    if data.is_empty() {
        return Err(Error::Empty("empty dataset".into()));
    }
    Ok(())
}

pub fn train(model: ModelState, cfg: &TrainConfig, data: &TensorSet) -> Result<(TrainReport, ModelState)> {
    train_with(model, cfg, data, |_, _| Ok(()))
}

/// Trains on the 75% side of the seeded split and validates on the rest.
/// `on_best` runs whenever the validation loss strictly improves, with the
/// new best model; the returned model is the best one, not the last.
pub fn train_with(
    mut model: ModelState,
    cfg: &TrainConfig,
    data: &TensorSet,
    mut on_best: impl FnMut(&ModelState, &EpochRecord) -> Result<()>,
) -> Result<(TrainReport, ModelState)> {
    cfg.validate()?;
    check_dataset(&model, data)?;
    let (train_idx, val_idx) = cfg.split(data.len())?;
    if train_idx.len() < 2 {
        return Err(Error::InvalidConfig("training split needs at least 2 samples".into()));
    }
    model.config.dropout_rate = cfg.dropout_rate;
    if cfg.init_output_bias && model.step == 0 {
        let n = train_idx.len() as f64;
        for (k, b) in model.dense_bias.iter_mut().enumerate() {
            *b = train_idx.iter().map(|&i| data.targets[2 * i + k] as f64).sum::<f64>() / n;
        }
    }
    let mut opt = OptimizerState::for_model(cfg.optimizer, &model);
    let mut best: Option<(ModelState, EpochRecord)> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order = train_idx.clone();

    for epoch in 1..=cfg.epochs {
        order.copy_from_slice(&train_idx);
        order.shuffle(&mut RngStream::new(cfg.seed, Purpose::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        for batch in minibatches(&order, cfg.batch_size) {
            let (x, y) = data.batch(batch);
            let mut rng = RngStream::new(cfg.seed, Purpose::Dropout, model.step);
            let (pred, cache) = model.forward(&x, Mode::Train, &mut rng)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let (g, _) = model.backward(&cache, &grad)?;
            let step = model.step + 1;
            let grads = g.trainable();
            optimizer_step(&mut opt, &mut model.trainable_mut(), &grads, cfg.learning_rate, step)?;
            model.apply_batch_stats(&cache);
            model.step = step;
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let val_loss = evaluate_loss(&model, data, &val_idx)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_rmse_m: val_loss.sqrt(),
        };
        if best.as_ref().is_none_or(|(_, b)| val_loss < b.val_loss) {
            on_best(&model, &rec)?;
            best = Some((model.clone(), rec.clone()));
        }
        epochs.push(rec);
    }
    let (best_model, best_rec) = best.expect("at least one epoch");
    Ok((
        TrainReport {
            epochs,
            best_epoch: best_rec.epoch,
            best_val_loss: best_rec.val_loss,
            best_checkpoint: None,
            train_size: train_idx.len(),
            val_size: val_idx.len(),
        },
        best_model,
    ))
}
