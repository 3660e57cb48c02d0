//! Seeded random search over a discrete hyperparameter grid.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::TensorSet;
use crate::error::{Error, Result};
use crate::nn::{ModelState, ResNetConfig};
use crate::optim::{train, OptimizerKind, TrainConfig};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub dropout_rates: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            optimizers: OptimizerKind::ALL.to_vec(),
            learning_rates: vec![0.01, 0.001, 0.0005, 0.0001],
            batch_sizes: vec![8, 16, 32, 64],
            dropout_rates: vec![0.2, 0.3, 0.4, 0.5],
        }
    }
}

/// One point of the space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.optimizers.is_empty()
            || self.learning_rates.is_empty()
            || self.batch_sizes.is_empty()
            || self.dropout_rates.is_empty()
        {
            return Err(Error::InvalidConfig("every search-space list must be non-empty".into()));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.optimizers.len() * self.learning_rates.len() * self.batch_sizes.len() * self.dropout_rates.len()
    }

    /// Mixed-radix decoding, dropout varying fastest.
    pub fn point(&self, index: usize) -> Hyperparams {
        let mut i = index % self.cardinality();
        let d = i % self.dropout_rates.len();
        i /= self.dropout_rates.len();
        let b = i % self.batch_sizes.len();
        i /= self.batch_sizes.len();
        let l = i % self.learning_rates.len();
        i /= self.learning_rates.len();
        Hyperparams {
            optimizer: self.optimizers[i],
            learning_rate: self.learning_rates[l],
            batch_size: self.batch_sizes[b],
            dropout_rate: self.dropout_rates[d],
        }
    }

    pub fn contains(&self, h: &Hyperparams) -> bool {
        self.optimizers.contains(&h.optimizer)
            && self.learning_rates.contains(&h.learning_rate)
            && self.batch_sizes.contains(&h.batch_size)
            && self.dropout_rates.contains(&h.dropout_rate)
    }

    /// Point indices for `n` trials: a seeded permutation of the space,
    /// re-drawn only once every point has been used.
    pub fn sample_indices(&self, n: usize, seed: u64) -> Vec<usize> {
        let card = self.cardinality();
        let mut out = Vec::with_capacity(n);
        let mut round = 0u64;
        while out.len() < n {
            let mut perm: Vec<usize> = (0..card).collect();
            perm.shuffle(&mut RngStream::new(seed, Purpose::Search, round));
            out.extend(perm.into_iter().take(n - out.len()));
            round += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based.
    pub trial: usize,
    pub params: Hyperparams,
    pub seed: u64,
    /// Best validation loss (squared meters); infinite if training diverged.
    pub val_loss: f64,
    pub val_rmse_m: f64,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<TrialRecord>,
    /// Index into `trials`.
    pub best: usize,
}

impl SearchResult {
    pub fn best_trial(&self) -> &TrialRecord {
        &self.trials[self.best]
    }
}

/// Smallest validation loss; ties go to the earliest trial.
pub fn select_best(trials: &[TrialRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if best.is_none_or(|b| t.val_loss < trials[b].val_loss) {
            best = Some(i);
        }
    }
    best
}

/// Runs `n_trials` trainings. Every trial validates on the same split
/// (drawn from `seed`) and gets its own initialization and shuffling seed.
/// A trial that diverges is kept with an infinite loss.
pub fn random_search(
    space: &SearchSpace,
    n_trials: usize,
    base: &TrainConfig,
    model_config: &ResNetConfig,
    data: &TensorSet,
    seed: u64,
) -> Result<SearchResult> {
    random_search_with(space, n_trials, base, model_config, data, seed, |_| {})
}

pub fn random_search_with(
    space: &SearchSpace,
    n_trials: usize,
    base: &TrainConfig,
    model_config: &ResNetConfig,
    data: &TensorSet,
    seed: u64,
    mut on_trial: impl FnMut(&TrialRecord),
) -> Result<SearchResult> {
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    let mut trials = Vec::with_capacity(n_trials);
    for (i, idx) in space.sample_indices(n_trials, seed).into_iter().enumerate() {
        let params = space.point(idx);
        let trial_seed = RngStream::new(seed, Purpose::TrialSeed, i as u64).next_u64();
        let cfg = TrainConfig {
            optimizer: params.optimizer,
            learning_rate: params.learning_rate,
            batch_size: params.batch_size,
            dropout_rate: params.dropout_rate,
            seed: trial_seed,
            split_seed: Some(seed),
            ..base.clone()
        };
        let model = ModelState::new(
            ResNetConfig {
                dropout_rate: params.dropout_rate,
                ..model_config.clone()
            },
            trial_seed,
        )?;
        let (val_loss, best_epoch) = match train(model, &cfg, data) {
            Ok((report, _)) => (report.best_val_loss, Some(report.best_epoch)),
            Err(Error::Divergence { .. } | Error::NonFiniteGradient(_)) => (f64::INFINITY, None),
            Err(e) => return Err(e),
        };
        let rec = TrialRecord {
            trial: i + 1,
            params,
            seed: trial_seed,
            val_loss,
            val_rmse_m: val_loss.sqrt(),
            best_epoch,
        };
        on_trial(&rec);
        trials.push(rec);
    }
    let best = select_best(&trials).expect("at least one trial");
    Ok(SearchResult { trials, best })
}
