//! Residual network: stem conv -> BN -> ReLU -> residual blocks -> global
//! average pool -> dense(2).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    batch_norm, batch_norm_backward, check_dropout_rate, conv2d, conv2d_backward, dense, dense_backward, dropout,
    dropout_backward, global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm, BnCache,
};
use super::{Mode, Tensor};
use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResNetConfig {
    pub stem_filters: usize,
    pub num_blocks: usize,
    pub block_strides: Vec<usize>,
    /// Channel multiplier applied on every strided block.
    pub channel_growth: usize,
    pub dropout_rate: f64,
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self {
            stem_filters: 32,
            num_blocks: 3,
            block_strides: vec![1, 2, 2],
            channel_growth: 2,
            dropout_rate: 0.2,
            input_channels: 16,
            input_height: 62,
            input_width: 62,
        }
    }
}

impl ResNetConfig {
    pub fn for_input(channels: usize, height: usize, width: usize) -> Self {
        Self {
            input_channels: channels,
            input_height: height,
            input_width: width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.stem_filters == 0 || self.channel_growth == 0 {
            return bad("stem filters and channel growth must be positive".into());
        }
        if self.block_strides.len() != self.num_blocks {
            return bad(format!(
                "{} block strides given for {} blocks",
                self.block_strides.len(),
                self.num_blocks
            ));
        }
        if let Some(s) = self.block_strides.iter().find(|s| !matches!(s, 1 | 2)) {
            return bad(format!("block stride {s} not in {{1, 2}}"));
        }
        check_dropout_rate(self.dropout_rate)?;
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return bad("input dimensions must be positive".into());
        }
        Ok(())
    }

    /// `(in_channels, out_channels, stride)` per block.
    pub fn block_layout(&self) -> Vec<(usize, usize, usize)> {
        let mut c = self.stem_filters;
        self.block_strides
            .iter()
            .map(|&s| {
                let out = if s == 2 { c * self.channel_growth } else { c };
                let l = (c, out, s);
                c = out;
                l
            })
            .collect()
    }

    pub fn feature_channels(&self) -> usize {
        self.block_layout().last().map_or(self.stem_filters, |l| l.1)
    }
}

/// A bias-free convolution followed by batch norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBn {
    pub kernel: Tensor,
    pub bn: BatchNorm,
}

impl ConvBn {
    fn new(cin: usize, cout: usize, k: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[cout, cin, k, k]),
            bn: BatchNorm::new(cout),
        }
    }

    fn padding(&self) -> usize {
        self.kernel.shape[2] / 2
    }

    fn arrays<'a>(&'a self, prefix: &str, out: &mut Vec<NamedArray<'a>>) {
        let c = self.bn.channels();
        out.push(NamedArray::param(
            format!("{prefix}.kernel"),
            &self.kernel.shape,
            &self.kernel.data,
        ));
        out.push(NamedArray::param(format!("{prefix}.bn.gamma"), &[c], &self.bn.gamma));
        out.push(NamedArray::param(format!("{prefix}.bn.beta"), &[c], &self.bn.beta));
        out.push(NamedArray::buffer(
            format!("{prefix}.bn.running_mean"),
            &[c],
            &self.bn.running_mean,
        ));
        out.push(NamedArray::buffer(
            format!("{prefix}.bn.running_var"),
            &[c],
            &self.bn.running_var,
        ));
    }

    fn arrays_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Vec<f64>>) {
        out.push(&mut self.kernel.data);
        out.push(&mut self.bn.gamma);
        out.push(&mut self.bn.beta);
        out.push(&mut self.bn.running_mean);
        out.push(&mut self.bn.running_var);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub conv1: ConvBn,
    pub conv2: ConvBn,
    /// 1x1 projection, present when the stride or channel count changes.
    pub shortcut: Option<ConvBn>,
    pub stride: usize,
}

impl Block {
    pub fn new(cin: usize, cout: usize, stride: usize) -> Self {
        Self {
            conv1: ConvBn::new(cin, cout, 3),
            conv2: ConvBn::new(cout, cout, 3),
            shortcut: (stride != 1 || cin != cout).then(|| ConvBn::new(cin, cout, 1)),
            stride,
        }
    }

    fn parts(&self) -> impl Iterator<Item = (&'static str, &ConvBn)> {
        [("conv1", &self.conv1), ("conv2", &self.conv2)]
            .into_iter()
            .chain(self.shortcut.as_ref().map(|s| ("shortcut", s)))
    }
}

/// One stored array: a trainable parameter or a running-statistic buffer.
#[derive(Debug, Clone)]
pub struct NamedArray<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
    pub trainable: bool,
}

impl<'a> NamedArray<'a> {
    fn param(name: String, shape: &[usize], values: &'a [f64]) -> Self {
        Self {
            name,
            shape: shape.to_vec(),
            values,
            trainable: true,
        }
    }

    fn buffer(name: String, shape: &[usize], values: &'a [f64]) -> Self {
        Self {
            trainable: false,
            ..Self::param(name, shape, values)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ResNetConfig,
    pub stem: ConvBn,
    pub blocks: Vec<Block>,
    /// `[2, features]`
    pub dense_weight: Tensor,
    pub dense_bias: Vec<f64>,
    /// Optimizer steps taken so far.
    pub step: u64,
}

#[derive(Debug, Clone)]
struct ConvBnCache {
    input: Tensor,
    bn: BnCache,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    c1: ConvBnCache,
    act: Tensor,
    mask: Option<Vec<f64>>,
    c2: ConvBnCache,
    shortcut: Option<ConvBnCache>,
    out: Tensor,
}

/// Activations kept from a forward pass for the backward pass and for the
/// running-statistics update.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stem: ConvBnCache,
    stem_out: Tensor,
    blocks: Vec<BlockCache>,
    pooled: Tensor,
}

fn conv_bn(x: &Tensor, p: &ConvBn, stride: usize, mode: Mode) -> Result<(Tensor, ConvBnCache)> {
    let c = conv2d(x, &p.kernel, stride, p.padding())?;
    let (y, bn) = batch_norm(&c, &p.bn, mode)?;
    Ok((y, ConvBnCache { input: x.clone(), bn }))
}

fn conv_bn_backward(grad: &Tensor, p: &ConvBn, stride: usize, cache: &ConvBnCache, g: &mut ConvBn) -> Result<Tensor> {
    let (dc, dgamma, dbeta) = batch_norm_backward(grad, &p.bn, &cache.bn)?;
    let (dx, dk) = conv2d_backward(&cache.input, &p.kernel, stride, p.padding(), &dc)?;
    g.kernel = dk;
    g.bn.gamma = dgamma;
    g.bn.beta = dbeta;
    Ok(dx)
}

/// Main path conv3x3(s) -> BN -> ReLU -> dropout -> conv3x3 -> BN, added to
/// the shortcut, then ReLU.
pub fn residual_block<R: Rng + ?Sized>(
    x: &Tensor,
    block: &Block,
    dropout_rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, BlockCache)> {
    let (b1, c1) = conv_bn(x, &block.conv1, block.stride, mode)?;
    let act = relu(&b1);
    let (d1, mask) = dropout(&act, dropout_rate, mode, rng)?;
    let (b2, c2) = conv_bn(&d1, &block.conv2, 1, mode)?;
    let (sc, shortcut) = match &block.shortcut {
        Some(p) => {
            let (y, c) = conv_bn(x, p, block.stride, mode)?;
            (y, Some(c))
        }
        None => (x.clone(), None),
    };
    let out = relu(&b2.add(&sc)?);
    Ok((
        out.clone(),
        BlockCache {
            c1,
            act,
            mask,
            c2,
            shortcut,
            out,
        },
    ))
}

/// Returns the input gradient and the parameter gradients in a block-shaped
/// container.
pub fn residual_block_backward(grad: &Tensor, block: &Block, cache: &BlockCache) -> Result<(Tensor, Block)> {
    let mut g = block.clone();
    let dz = relu_backward(&cache.out, grad)?;
    let dd1 = conv_bn_backward(&dz, &block.conv2, 1, &cache.c2, &mut g.conv2)?;
    let da = dropout_backward(&dd1, cache.mask.as_deref());
    let db1 = relu_backward(&cache.act, &da)?;
    let dx_main = conv_bn_backward(&db1, &block.conv1, block.stride, &cache.c1, &mut g.conv1)?;
    let dx_sc = match (&block.shortcut, &cache.shortcut, &mut g.shortcut) {
        (Some(p), Some(c), Some(gs)) => conv_bn_backward(&dz, p, block.stride, c, gs)?,
        _ => dz,
    };
    Ok((dx_main.add(&dx_sc)?, g))
}

impl ModelState {
    /// He-normal convolution and dense weights, unit BN scale, zero shifts.
    pub fn new(config: ResNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut stem = ConvBn::new(config.input_channels, config.stem_filters, 3);
        let mut blocks: Vec<Block> = config
            .block_layout()
            .into_iter()
            .map(|(cin, cout, s)| Block::new(cin, cout, s))
            .collect();
        let features = config.feature_channels();
        let mut dense_weight = Tensor::zeros(&[2, features]);

        let mut rng = RngStream::new(seed, Purpose::Init, 0);
        let mut he = |t: &mut Tensor, fan_in: usize| {
            let n = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for v in &mut t.data {
                *v = n.sample(&mut rng);
            }
        };
        let fan_in = |t: &Tensor| t.shape[1..].iter().product::<usize>();
        let f = fan_in(&stem.kernel);
        he(&mut stem.kernel, f);
        for b in &mut blocks {
            for p in [Some(&mut b.conv1), Some(&mut b.conv2), b.shortcut.as_mut()]
                .into_iter()
                .flatten()
            {
                let f = fan_in(&p.kernel);
                he(&mut p.kernel, f);
            }
        }
        he(&mut dense_weight, features);
        Ok(Self {
            config,
            stem,
            blocks,
            dense_weight,
            dense_bias: vec![0.0; 2],
            step: 0,
        })
    }

    /// Every stored array in a fixed order: stem, blocks (conv1, conv2,
    /// shortcut), dense.
    pub fn arrays(&self) -> Vec<NamedArray<'_>> {
        let mut out = Vec::new();
        self.stem.arrays("stem", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, p) in b.parts() {
                p.arrays(&format!("block{i}.{name}"), &mut out);
            }
        }
        out.push(NamedArray::param(
            "dense.weight".into(),
            &self.dense_weight.shape,
            &self.dense_weight.data,
        ));
        out.push(NamedArray::param("dense.bias".into(), &[2], &self.dense_bias));
        out
    }

    /// Mutable views in the same order as [`ModelState::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        self.stem.arrays_mut(&mut out);
        for b in &mut self.blocks {
            b.conv1.arrays_mut(&mut out);
            b.conv2.arrays_mut(&mut out);
            if let Some(s) = &mut b.shortcut {
                s.arrays_mut(&mut out);
            }
        }
        out.push(&mut self.dense_weight.data);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        self.arrays()
            .into_iter()
            .filter(|a| a.trainable)
            .map(|a| a.values)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let flags: Vec<bool> = self.arrays().iter().map(|a| a.trainable).collect();
        self.arrays_mut()
            .into_iter()
            .zip(flags)
            .filter_map(|(a, t)| t.then_some(a))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|a| a.len()).sum()
    }

    /// Finite parameters and strictly positive running variances.
    pub fn is_valid(&self) -> bool {
        self.arrays().iter().all(|a| {
            a.values.iter().all(|v| v.is_finite())
                && (!a.name.ends_with("running_var") || a.values.iter().all(|v| *v > 0.0))
        })
    }

    pub fn check_input(&self, batch: &Tensor) -> Result<()> {
        let (b, c, h, w) = batch.dims4()?;
        let cfg = &self.config;
        if b == 0 || (c, h, w) != (cfg.input_channels, cfg.input_height, cfg.input_width) {
            return Err(Error::Shape(format!(
                "batch {:?} does not match model input [B, {}, {}, {}]",
                batch.shape, cfg.input_channels, cfg.input_height, cfg.input_width
            )));
        }
        Ok(())
    }

    /// Returns `[B, 2]` predictions in meters. Running statistics are not
    /// touched; apply them with [`ModelState::apply_batch_stats`].
    pub fn forward<R: Rng + ?Sized>(&self, batch: &Tensor, mode: Mode, rng: &mut R) -> Result<(Tensor, ForwardCache)> {
        self.check_input(batch)?;
        let (s, stem) = conv_bn(batch, &self.stem, 1, mode)?;
        let mut x = relu(&s);
        let stem_out = x.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = residual_block(&x, b, self.config.dropout_rate, mode, rng)?;
            blocks.push(c);
            x = y;
        }
        let pooled = global_avg_pool(&x)?;
        let out = dense(&pooled, &self.dense_weight, &self.dense_bias)?;
        Ok((
            out,
            ForwardCache {
                stem,
                stem_out,
                blocks,
                pooled,
            },
        ))
    }

    /// Eval-mode forward pass.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        // eval mode never draws from the stream
        let mut rng = RngStream::new(0, Purpose::Dropout, 0);
        Ok(self.forward(batch, Mode::Eval, &mut rng)?.0)
    }

    /// Gradients of a scalar loss given `d loss / d output`. The result has
    /// the model's shape; only trainable arrays are meaningful. Also returns
    /// the gradient with respect to the input batch.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<(ModelState, Tensor)> {
        let mut g = self.clone();
        let (dpool, dw, db) = dense_backward(&cache.pooled, &self.dense_weight, grad_out)?;
        g.dense_weight = dw;
        g.dense_bias = db;
        let last_shape = cache.blocks.last().map_or(&cache.stem_out.shape, |c| &c.out.shape);
        let mut d = global_avg_pool_backward(&dpool, last_shape)?;
        for ((b, c), gb) in self.blocks.iter().zip(&cache.blocks).zip(&mut g.blocks).rev() {
            let (dx, grads) = residual_block_backward(&d, b, c)?;
            *gb = grads;
            d = dx;
        }
        let ds = relu_backward(&cache.stem_out, &d)?;
        let dx = conv_bn_backward(&ds, &self.stem, 1, &cache.stem, &mut g.stem)?;
        Ok((g, dx))
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics.
    pub fn apply_batch_stats(&mut self, cache: &ForwardCache) {
        self.stem.bn.update_running(&cache.stem.bn);
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            b.conv1.bn.update_running(&c.c1.bn);
            b.conv2.bn.update_running(&c.c2.bn);
            if let (Some(s), Some(sc)) = (&mut b.shortcut, &c.shortcut) {
                s.bn.update_running(&sc.bn);
            }
        }
    }
}
