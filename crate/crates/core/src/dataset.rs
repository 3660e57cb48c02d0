//! In-memory network dataset: stacked likelihood channels with targets.

use crate::error::{Error, Result};
use crate::geometry::Point2D;
use crate::likelihood::SampleTensor;
use crate::nn::Tensor;

/// `N` samples of `C x H x W` inputs, `N x 2` targets in meters, and an
/// `N x C` validity mask (1 = channel built from a measurement, 0 =
/// placeholder). Stored as `f32`, the on-disk precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorSet {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
    pub mask: Vec<f32>,
}

impl TensorSet {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            ..Self::default()
        }
    }

    pub fn from_samples(samples: &[SampleTensor]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Empty("no samples to stack".into()))?;
        let mut set = Self::new(first.channels, first.height, first.width);
        for s in samples {
            set.push(s)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, s: &SampleTensor) -> Result<()> {
        if (s.channels, s.height, s.width) != (self.channels, self.height, self.width)
            || s.values.len() != self.sample_len()
            || 2 * s.mask.len() != self.channels
        {
            return Err(Error::Shape(format!(
                "sample {}x{}x{} does not match dataset {}x{}x{}",
                s.channels, s.height, s.width, self.channels, self.height, self.width
            )));
        }
        self.inputs.extend_from_slice(&s.values);
        self.targets.push(s.target.x as f32);
        self.targets.push(s.target.y as f32);
        self.mask
            .extend(s.mask.iter().flat_map(|m| m.map(|v| if v { 1.0f32 } else { 0.0 })));
        Ok(())
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.targets.len() != 2 * n
            || self.inputs.len() != n * self.sample_len()
            || self.mask.len() != n * self.channels
        {
            return Err(Error::Shape(format!(
                "inconsistent dataset arrays: {} inputs, {} targets, {} mask entries for {n} samples of {}x{}x{}",
                self.inputs.len(),
                self.targets.len(),
                self.mask.len(),
                self.channels,
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.sample_len()..][..self.sample_len()]
    }

    pub fn target(&self, i: usize) -> Point2D {
        Point2D::new(self.targets[2 * i] as f64, self.targets[2 * i + 1] as f64)
    }

    pub fn targets(&self) -> Vec<Point2D> {
        (0..self.len()).map(|i| self.target(i)).collect()
    }

    /// `([B, C, H, W], [B, 2])` tensors for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let mut x = Vec::with_capacity(indices.len() * self.sample_len());
        let mut y = Vec::with_capacity(indices.len() * 2);
        for &i in indices {
            x.extend(self.input(i).iter().map(|&v| v as f64));
            y.extend(self.targets[2 * i..2 * i + 2].iter().map(|&v| v as f64));
        }
        let b = indices.len();
        (
            Tensor {
                shape: vec![b, self.channels, self.height, self.width],
                data: x,
            },
            Tensor {
                shape: vec![b, 2],
                data: y,
            },
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.channels, self.height, self.width);
        for &i in indices {
            out.inputs.extend_from_slice(self.input(i));
            out.targets.extend_from_slice(&self.targets[2 * i..2 * i + 2]);
            out.mask
                .extend_from_slice(&self.mask[i * self.channels..][..self.channels]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: f32, x: f64) -> SampleTensor {
        SampleTensor {
            channels: 2,
            height: 2,
            width: 3,
            values: vec![v; 12],
            target: Point2D::new(x, 1.0),
            mask: vec![[true, false]],
        }
    }

    #[test]
    fn stack_and_batch() {
        let set = TensorSet::from_samples(&[sample(0.5, 2.0), sample(0.25, 3.0)]).unwrap();
        assert_eq!(set.len(), 2);
        set.validate().unwrap();
        assert_eq!(set.mask, vec![1.0, 0.0, 1.0, 0.0]);
        let (x, y) = set.batch(&[1, 0]);
        assert_eq!(x.shape, vec![2, 2, 2, 3]);
        assert_eq!(x.data[0], 0.25);
        assert_eq!(y.data, vec![3.0, 1.0, 2.0, 1.0]);
        let sub = set.subset(&[1]);
        assert_eq!(sub.target(0), Point2D::new(3.0, 1.0));
        sub.validate().unwrap();
    }

    #[test]
    fn rejects_mismatched_sample() {
        let mut set = TensorSet::new(2, 2, 2);
        assert!(set.push(&sample(0.0, 0.0)).is_err());
        assert!(TensorSet::from_samples(&[]).is_err());
    }
}
