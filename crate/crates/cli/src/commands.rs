use std::path::Path;

use ralm::dataio::{self, datasets, tables, MeasurementSet, ScenarioConfig};
use ralm::dataset::TensorSet;
use ralm::error::{Error, Result};
use ralm::eval::{ecdf, euclidean_errors, metrics_summary, MetricsSummary, ResidualSpans};
use ralm::geometry::Point2D;
use ralm::hpo::{random_search_with, SearchSpace};
use ralm::nn::{ModelState, ResNetConfig};
use ralm::optim::{train_with, TrainConfig};
use ralm::pipeline;
use serde::{Deserialize, Serialize};

use crate::{Cli, Command, Split};

/// Network shape knobs; the input dimensions come from the dataset and the
/// dropout rate from `[train]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ModelOptions {
    stem_filters: usize,
    num_blocks: usize,
    block_strides: Vec<usize>,
    channel_growth: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        let d = ResNetConfig::default();
        Self {
            stem_filters: d.stem_filters,
            num_blocks: d.num_blocks,
            block_strides: d.block_strides,
            channel_growth: d.channel_growth,
        }
    }
}

impl ModelOptions {
    fn config(&self, data: &TensorSet, dropout_rate: f64) -> ResNetConfig {
        ResNetConfig {
            stem_filters: self.stem_filters,
            num_blocks: self.num_blocks,
            block_strides: self.block_strides.clone(),
            channel_growth: self.channel_growth,
            dropout_rate,
            input_channels: data.channels,
            input_height: data.height,
            input_width: data.width,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    train: TrainConfig,
    model: ModelOptions,
    space: SearchSpace,
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_tensors(path: &Path) -> Result<TensorSet> {
    let (data, _) = dataio::read_tensors(path)?;
    if data.is_empty() {
        return Err(Error::Empty(format!("{} holds no samples", path.display())));
    }
    Ok(data)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { scenario, out } => {
            let mut sc = ScenarioConfig::load(scenario)?;
            if let Some(s) = cli.seed {
                sc.seed = s;
            }
            let set = pipeline::simulate(&sc)?;
            set.write(out)?;
            eprintln!(
                "{} samples x {} anchors -> {}",
                set.states.len(),
                sc.anchors.len(),
                out.display()
            );
        }
        Command::Gridmaps { input, out } => {
            let set = MeasurementSet::read(input)?;
            let (data, meta) = pipeline::build_tensors(&set)?;
            datasets::write_tensors(&data, &meta, out)?;
            eprintln!(
                "{} samples of {}x{}x{} -> {}",
                data.len(),
                data.channels,
                data.height,
                data.width,
                out.display()
            );
        }
        Command::Train {
            data,
            config,
            out,
            report,
        } => {
            let rc = load_run_config(config.as_deref())?;
            let mut cfg = rc.train;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let data = load_tensors(data)?;
            let model = ModelState::new(rc.model.config(&data, cfg.dropout_rate), cfg.seed)?;
            eprintln!("{} parameters", model.parameter_count());
            let (mut rep, best) = train_with(model, &cfg, &data, |m, rec| {
                eprintln!(
                    "epoch {}: val loss {:.5} (rmse {:.4} m), saving",
                    rec.epoch, rec.val_loss, rec.val_rmse_m
                );
                dataio::write_checkpoint(m, Some(&cfg), None, out)
            })?;
            rep.best_checkpoint = Some(out.clone());
            dataio::write_checkpoint(&best, Some(&cfg), Some(&rep), out)?;
            tables::write_bytes(report, &tables::loss_csv(&rep.epochs)?)?;
            eprintln!("best epoch {} val loss {:.5}", rep.best_epoch, rep.best_val_loss);
        }
        Command::Search {
            data,
            trials,
            epochs,
            config,
            out,
        } => {
            let mut rc = load_run_config(config.as_deref())?;
            rc.train.epochs = *epochs;
            let seed = cli.seed.unwrap_or(rc.train.seed);
            let data = load_tensors(data)?;
            let model_cfg = rc.model.config(&data, rc.train.dropout_rate);
            let result = random_search_with(&rc.space, *trials, &rc.train, &model_cfg, &data, seed, |t| {
                eprintln!(
                    "trial {}: {} lr {} batch {} dropout {} -> val loss {:.5}",
                    t.trial,
                    t.params.optimizer,
                    t.params.learning_rate,
                    t.params.batch_size,
                    t.params.dropout_rate,
                    t.val_loss
                )
            })?;
            tables::write_bytes(out, &tables::trials_csv(&result.trials, result.best)?)?;
            eprintln!("selected trial {}", result.best_trial().trial);
        }
        Command::Evaluate {
            checkpoint,
            data,
            split,
            out_metrics,
            out_ecdf,
        } => {
            let ck = dataio::read_checkpoint(checkpoint)?;
            let data = load_tensors(data)?;
            let (fit_idx, eval_idx) = match split {
                Split::All => ((0..data.len()).collect(), (0..data.len()).collect()),
                Split::Test => {
                    let mut cfg = ck.train.clone().ok_or_else(|| {
                        Error::InvalidConfig("--split test needs a checkpoint that records its training config".into())
                    })?;
                    if let Some(s) = cli.seed {
                        cfg.split_seed = Some(s);
                    }
                    cfg.split(data.len())?
                }
            };
            let report = evaluate(&ck.model, &data, &fit_idx, &eval_idx, *split)?;
            let errors = euclidean_errors(&report.pred, &report.truth)?;
            tables::write_json(out_metrics, &report.metrics)?;
            tables::write_bytes(out_ecdf, &tables::ecdf_csv(&ecdf(&errors)?)?)?;
            eprintln!(
                "n {} rmse {:.4} m median {:.4} m p95 {:.4} m",
                report.metrics.summary.n,
                report.metrics.summary.rmse_m,
                report.metrics.summary.median_m,
                report.metrics.summary.p95_m
            );
        }
        Command::Locate { input, method, out } => {
            let set = MeasurementSet::read(input)?;
            let est = pipeline::locate(&set, (*method).into())?;
            tables::write_bytes(out, &tables::locate_csv(&set.states, &est)?)?;
            let located = est.iter().filter(|e| e.is_some()).count();
            eprintln!("{located} of {} samples located", est.len());
        }
        Command::Residuals { input, bins, out } => {
            let set = MeasurementSet::read(input)?;
            let h = pipeline::residuals(&set, *bins, &ResidualSpans::default())?;
            tables::write_bytes(out, &tables::residuals_csv(&h)?)?;
            eprintln!(
                "{} valid measurements, mean range residual {:.4} m, mean angle residual {:.4} rad",
                h.valid, h.range_mean, h.angle_mean
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct Baseline {
    centroid: Point2D,
    #[serde(flatten)]
    summary: MetricsSummary,
}

#[derive(Debug, Clone, Serialize)]
struct EvalMetrics {
    split: &'static str,
    #[serde(flatten)]
    summary: MetricsSummary,
    /// Predicting the mean position of the samples the model was fit on.
    baseline_centroid: Option<Baseline>,
}

struct EvalReport {
    pred: Vec<Point2D>,
    truth: Vec<Point2D>,
    metrics: EvalMetrics,
}

fn evaluate(
    model: &ModelState,
    data: &TensorSet,
    fit_idx: &[usize],
    eval_idx: &[usize],
    split: Split,
) -> Result<EvalReport> {
    let mut pred = Vec::with_capacity(eval_idx.len());
    for chunk in eval_idx.chunks(64) {
        let (x, _) = data.batch(chunk);
        let y = model.predict(&x)?;
        pred.extend(y.data.chunks_exact(2).map(|p| Point2D::new(p[0], p[1])));
    }
    let truth: Vec<Point2D> = eval_idx.iter().map(|&i| data.target(i)).collect();
    let summary = metrics_summary(&pred, &truth)?;
    let baseline_centroid = match split {
        Split::All => None,
        Split::Test => {
            let n = fit_idx.len() as f64;
            let (sx, sy) = fit_idx
                .iter()
                .map(|&i| data.target(i))
                .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            let centroid = Point2D::new(sx / n, sy / n);
            Some(Baseline {
                centroid,
                summary: metrics_summary(&vec![centroid; truth.len()], &truth)?,
            })
        }
    };
    Ok(EvalReport {
        pred,
        truth,
        metrics: EvalMetrics {
            split: match split {
                Split::All => "all",
                Split::Test => "test",
            },
            summary,
            baseline_centroid,
        },
    })
}
