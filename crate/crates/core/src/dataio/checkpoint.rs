//! Model checkpoints (`kind = "checkpoint"`).
//!
//! One array per entry of [`ModelState::arrays`], stored as f32, so a loaded
//! model equals the saved one up to f32 rounding. The meta holds the
//! network configuration, the optimizer step, and optionally the training
//! configuration and report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::Container;
use crate::error::{Error, FormatError, Result};
use crate::nn::{ModelState, ResNetConfig};
use crate::optim::{TrainConfig, TrainReport};

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ResNetConfig,
    pub step: u64,
    pub train: Option<TrainConfig>,
    pub report: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelState,
    pub train: Option<TrainConfig>,
    pub report: Option<TrainReport>,
}

pub fn checkpoint_container(
    model: &ModelState,
    train: Option<&TrainConfig>,
    report: Option<&TrainReport>,
) -> Result<Container> {
    let meta = CheckpointMeta {
        model: model.config.clone(),
        step: model.step,
        train: train.cloned(),
        report: report.cloned(),
    };
    let meta = serde_json::to_value(&meta).map_err(|e| Error::Contract(format!("checkpoint meta: {e}")))?;
    let mut c = Container::new(CHECKPOINT_KIND, meta);
    for a in model.arrays() {
        c.push_f64(&a.name, &a.shape, a.values)?;
    }
    Ok(c)
}

pub fn write_checkpoint(
    model: &ModelState,
    train: Option<&TrainConfig>,
    report: Option<&TrainReport>,
    path: &Path,
) -> Result<()> {
    checkpoint_container(model, train, report)?.write(path)
}

/// Rebuilds the model from a decoded container. A missing or mis-shaped
/// array is a shape error.
pub fn checkpoint_from_container(c: &Container) -> Result<Checkpoint> {
    c.expect_kind(CHECKPOINT_KIND)
        .map_err(|e| Error::format("<checkpoint>", e))?;
    let meta: CheckpointMeta = serde_json::from_value(c.meta.clone())
        .map_err(|e| Error::format("<checkpoint>", FormatError::Header(format!("checkpoint meta: {e}"))))?;
    let mut model = ModelState::new(meta.model, 0)?;
    model.step = meta.step;
    let expected: Vec<(String, Vec<usize>)> = model.arrays().into_iter().map(|a| (a.name, a.shape)).collect();
    if c.arrays.len() != expected.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} arrays, the configured model {}",
            c.arrays.len(),
            expected.len()
        )));
    }
    for ((name, shape), dst) in expected.iter().zip(model.arrays_mut()) {
        let a = c
            .get(name)
            .map_err(|_| Error::Shape(format!("checkpoint lacks array {name}")))?;
        if &a.shape != shape {
            return Err(Error::Shape(format!(
                "array {name}: stored {:?}, model expects {shape:?}",
                a.shape
            )));
        }
        *dst = a.values.iter().map(|&v| v as f64).collect();
    }
    Ok(Checkpoint {
        model,
        train: meta.train,
        report: meta.report,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c = Container::read(path)?;
    checkpoint_from_container(&c).map_err(|e| match e {
        Error::Format { source, .. } => Error::format(path, source),
        other => other,
    })
}

/// Loads a checkpoint that must match `expected` exactly.
pub fn read_checkpoint_for(path: &Path, expected: &ResNetConfig) -> Result<Checkpoint> {
    let ck = read_checkpoint(path)?;
    if &ck.model.config != expected {
        return Err(Error::Shape(format!(
            "checkpoint network {:?} does not match the requested {:?}",
            ck.model.config, expected
        )));
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{perturb, random_tensor, tiny_config};

    #[test]
    fn save_load_same_predictions() {
        let mut model = ModelState::new(tiny_config(), 4).unwrap();
        perturb(&mut model, 5);
        model.step = 17;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.ralm");
        let cfg = TrainConfig::default();
        write_checkpoint(&model, Some(&cfg), None, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.model.step, 17);
        assert_eq!(back.train, Some(cfg));
        let c = &model.config;
        let x = random_tensor(&[3, c.input_channels, c.input_height, c.input_width], 8);
        let a = model.predict(&x).unwrap();
        let b = back.model.predict(&x).unwrap();
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() <= 1e-4 * (1.0 + u.abs()), "{u} vs {v}");
        }
        // a second save of the loaded model is byte-identical
        let path2 = dir.path().join("ck2.ralm");
        write_checkpoint(&back.model, back.train.as_ref(), None, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn wrong_input_channels_is_shape_error() {
        let model = ModelState::new(tiny_config(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.ralm");
        write_checkpoint(&model, None, None, &path).unwrap();
        let other = ResNetConfig {
            input_channels: model.config.input_channels + 2,
            ..model.config.clone()
        };
        assert!(matches!(read_checkpoint_for(&path, &other), Err(Error::Shape(_))));

        // a header that claims a different network than the stored arrays
        let mut c = checkpoint_container(&model, None, None).unwrap();
        c.meta["model"]["input_channels"] = serde_json::json!(model.config.input_channels + 2);
        assert!(matches!(checkpoint_from_container(&c), Err(Error::Shape(_))));
    }
}
