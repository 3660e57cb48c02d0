//! Layer kernels with paired backward passes. Convolutions are lowered to a
//! matrix product over im2col patches.

use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Mode, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// `c = a * b + beta * c` with `c` row-major `m x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above keep every index the kernel touches inside
    // the three slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv_output_size(n: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || n + 2 * padding < k {
        return Err(Error::Shape(format!(
            "kernel {k} with stride {stride}, padding {padding} does not fit input size {n}"
        )));
    }
    Ok((n + 2 * padding - k) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }

    /// Input coordinate for output index `o` at kernel offset `kk`.
    fn src(&self, o: usize, kk: usize, n: usize) -> Option<usize> {
        let i = (o * self.s + kk) as isize - self.p as isize;
        (i >= 0 && (i as usize) < n).then_some(i as usize)
    }

    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let np = self.out_pixels();
        for ci in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &mut cols[((ci * self.k + ky) * self.k + kx) * np..][..np];
                    for oy in 0..self.ho {
                        let dst = &mut row[oy * self.wo..][..self.wo];
                        match self.src(oy, ky, self.h) {
                            None => dst.fill(0.0),
                            Some(iy) => {
                                let src = &img[(ci * self.h + iy) * self.w..][..self.w];
                                for (ox, d) in dst.iter_mut().enumerate() {
                                    *d = self.src(ox, kx, self.w).map_or(0.0, |ix| src[ix]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let np = self.out_pixels();
        for ci in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &cols[((ci * self.k + ky) * self.k + kx) * np..][..np];
                    for oy in 0..self.ho {
                        let Some(iy) = self.src(oy, ky, self.h) else { continue };
                        let dst = &mut img[(ci * self.h + iy) * self.w..][..self.w];
                        for ox in 0..self.wo {
                            if let Some(ix) = self.src(ox, kx, self.w) {
                                dst[ix] += row[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_geometry(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<(usize, usize, ConvGeom)> {
    let (b, c, h, w) = input.dims4()?;
    let (cout, cin, kh, kw) = kernel.dims4()?;
    if cin != c || kh != kw {
        return Err(Error::Shape(format!(
            "kernel {:?} does not apply to input {:?}",
            kernel.shape, input.shape
        )));
    }
    let ho = conv_output_size(h, kh, stride, padding)?;
    let wo = conv_output_size(w, kw, stride, padding)?;
    Ok((
        b,
        cout,
        ConvGeom {
            c,
            h,
            w,
            k: kh,
            s: stride,
            p: padding,
            ho,
            wo,
        },
    ))
}

/// Cross-correlation of `input [B, C, H, W]` with `kernel [C', C, k, k]`,
/// zero padding, no bias.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (b, cout, g) = conv_geometry(input, kernel, stride, padding)?;
    let np = g.out_pixels();
    let mut out = Tensor::zeros(&[b, cout, g.ho, g.wo]);
    if out.is_empty() {
        return Ok(out);
    }
    let in_len = g.c * g.h * g.w;
    let run = |i: usize, dst: &mut [f64]| {
        let mut cols = vec![0.0; g.patch() * np];
        g.im2col(&input.data[i * in_len..][..in_len], &mut cols);
        gemm(cout, g.patch(), np, &kernel.data, g.patch(), 1, &cols, np, 1, 0.0, dst);
    };
    #[cfg(feature = "parallel")]
    out.data
        .par_chunks_mut(cout * np)
        .enumerate()
        .for_each(|(i, d)| run(i, d));
    #[cfg(not(feature = "parallel"))]
    out.data.chunks_mut(cout * np).enumerate().for_each(|(i, d)| run(i, d));
    Ok(out)
}

/// Returns `(d_input, d_kernel)`. Per-image kernel gradients are summed in
/// batch order so the result does not depend on thread scheduling.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (b, cout, g) = conv_geometry(input, kernel, stride, padding)?;
    let np = g.out_pixels();
    if grad_out.shape != [b, cout, g.ho, g.wo] {
        return Err(Error::Shape(format!(
            "conv gradient {:?}, expected {:?}",
            grad_out.shape,
            [b, cout, g.ho, g.wo]
        )));
    }
    let in_len = g.c * g.h * g.w;
    let mut d_input = Tensor::zeros(&input.shape);
    let mut d_kernel = Tensor::zeros(&kernel.shape);
    if in_len == 0 || b == 0 {
        return Ok((d_input, d_kernel));
    }
    let run = |i: usize, d_img: &mut [f64]| {
        let gout = &grad_out.data[i * cout * np..][..cout * np];
        let mut cols = vec![0.0; g.patch() * np];
        g.im2col(&input.data[i * in_len..][..in_len], &mut cols);
        let mut dk = vec![0.0; cout * g.patch()];
        // dK = gout * cols^T
        gemm(cout, np, g.patch(), gout, np, 1, &cols, 1, np, 0.0, &mut dk);
        // dcols = K^T * gout
        gemm(
            g.patch(),
            cout,
            np,
            &kernel.data,
            1,
            g.patch(),
            gout,
            np,
            1,
            0.0,
            &mut cols,
        );
        g.col2im(&cols, d_img);
        dk
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> = d_input
        .data
        .par_chunks_mut(in_len)
        .enumerate()
        .map(|(i, d)| run(i, d))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = d_input
        .data
        .chunks_mut(in_len)
        .enumerate()
        .map(|(i, d)| run(i, d))
        .collect();
    for dk in partials {
        for (a, v) in d_kernel.data.iter_mut().zip(dk) {
            *a += v;
        }
    }
    Ok((d_input, d_kernel))
}

/// Per-channel affine parameters and running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Folds train-mode batch statistics into the running estimates. The
    /// running variance tracks the biased batch variance.
    pub fn update_running(&mut self, cache: &BnCache) {
        if cache.mode != Mode::Train {
            return;
        }
        for c in 0..self.channels() {
            self.running_mean[c] = BN_MOMENTUM * self.running_mean[c] + (1.0 - BN_MOMENTUM) * cache.mean[c];
            self.running_var[c] = BN_MOMENTUM * self.running_var[c] + (1.0 - BN_MOMENTUM) * cache.var[c];
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub mode: Mode,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Batch statistics in train mode, running statistics in eval mode.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn batch_norm(input: &Tensor, bn: &BatchNorm, mode: Mode) -> Result<(Tensor, BnCache)> {
    let (b, c, h, w) = input.dims4()?;
    if c != bn.channels() {
        return Err(Error::Shape(format!(
            "batch norm over {} channels applied to {c}",
            bn.channels()
        )));
    }
    let hw = h * w;
    let n = (b * hw) as f64;
    let (mean, var) = match mode {
        Mode::Train => {
            if b < 2 {
                return Err(Error::Contract(format!(
                    "train-mode batch norm needs a batch of at least 2, got {b}"
                )));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let plane = |i: usize| &input.data[(i * c + ch) * hw..][..hw];
                let m = (0..b).map(|i| plane(i).iter().sum::<f64>()).sum::<f64>() / n;
                let v = (0..b)
                    .map(|i| plane(i).iter().map(|x| (x - m) * (x - m)).sum::<f64>())
                    .sum::<f64>()
                    / n;
                mean[ch] = m;
                var[ch] = v;
            }
            (mean, var)
        }
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; input.len()];
    let mut out = Tensor::zeros(&input.shape);
    for i in 0..b {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let src = &input.data[off..off + hw];
            for ((x, o), &v) in xhat[off..off + hw]
                .iter_mut()
                .zip(&mut out.data[off..off + hw])
                .zip(src)
            {
                *x = (v - mean[ch]) * inv_std[ch];
                *o = bn.gamma[ch] * *x + bn.beta[ch];
            }
        }
    }
    Ok((
        out,
        BnCache {
            mode,
            xhat,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batch_norm_backward(grad_out: &Tensor, bn: &BatchNorm, cache: &BnCache) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let (b, c, h, w) = grad_out.dims4()?;
    if c != bn.channels() || cache.xhat.len() != grad_out.len() {
        return Err(Error::Shape("batch norm gradient does not match its cache".into()));
    }
    let hw = h * w;
    let n = (b * hw) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for i in 0..b {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for j in off..off + hw {
                dbeta[ch] += grad_out.data[j];
                dgamma[ch] += grad_out.data[j] * cache.xhat[j];
            }
        }
    }
    let mut dx = Tensor::zeros(&grad_out.shape);
    for i in 0..b {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let scale = bn.gamma[ch] * cache.inv_std[ch];
            for j in off..off + hw {
                dx.data[j] = match cache.mode {
                    Mode::Train => scale / n * (n * grad_out.data[j] - dbeta[ch] - cache.xhat[j] * dgamma[ch]),
                    Mode::Eval => scale * grad_out.data[j],
                };
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().map(|&x| x.max(0.0)).collect(),
    }
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    output.same_shape(grad_out)?;
    Ok(Tensor {
        shape: grad_out.shape.clone(),
        data: output
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
            .collect(),
    })
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Returns the scaling mask when one was applied.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    check_dropout_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let out = Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().zip(&mask).map(|(x, m)| x * m).collect(),
    };
    Ok((out, Some(mask)))
}

pub fn dropout_backward(grad_out: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => grad_out.clone(),
        Some(m) => Tensor {
            shape: grad_out.shape.clone(),
            data: grad_out.data.iter().zip(m).map(|(g, m)| g * m).collect(),
        },
    }
}

/// `x [B, F] -> x W^T + b` with `W [O, F]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (b, f) = x.dims2()?;
    let (o, fw) = weight.dims2()?;
    if fw != f || bias.len() != o {
        return Err(Error::Shape(format!(
            "dense weight {:?} / bias {} on input {:?}",
            weight.shape,
            bias.len(),
            x.shape
        )));
    }
    let mut out = Tensor::zeros(&[b, o]);
    for row in out.data.chunks_mut(o.max(1)) {
        row.copy_from_slice(bias);
    }
    gemm(b, f, o, &x.data, f, 1, &weight.data, 1, f, 1.0, &mut out.data);
    Ok(out)
}

/// Returns `(d_x, d_weight, d_bias)`.
pub fn dense_backward(x: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let (b, f) = x.dims2()?;
    let (o, _) = weight.dims2()?;
    if grad_out.shape != [b, o] {
        return Err(Error::Shape(format!(
            "dense gradient {:?}, expected [{b}, {o}]",
            grad_out.shape
        )));
    }
    let mut dx = Tensor::zeros(&[b, f]);
    gemm(b, o, f, &grad_out.data, o, 1, &weight.data, f, 1, 0.0, &mut dx.data);
    let mut dw = Tensor::zeros(&[o, f]);
    gemm(o, b, f, &grad_out.data, 1, o, &x.data, f, 1, 0.0, &mut dw.data);
    let mut db = vec![0.0; o];
    for row in grad_out.data.chunks(o.max(1)) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok((dx, dw, db))
}

/// Mean over `(H, W)`: `[B, C, H, W] -> [B, C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = input.dims4()?;
    let hw = h * w;
    if hw == 0 {
        return Err(Error::Shape("global pooling over an empty plane".into()));
    }
    let data = input
        .data
        .chunks(hw)
        .map(|p| p.iter().sum::<f64>() / hw as f64)
        .collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn global_avg_pool_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let [b, c, h, w] = input_shape[..] else {
        return Err(Error::Shape(format!("pooling input shape {input_shape:?}")));
    };
    if grad_out.shape != [b, c] {
        return Err(Error::Shape(format!(
            "pooling gradient {:?}, expected [{b}, {c}]",
            grad_out.shape
        )));
    }
    let hw = h * w;
    let mut dx = Tensor::zeros(input_shape);
    for (plane, g) in dx.data.chunks_mut(hw).zip(&grad_out.data) {
        plane.fill(g / hw as f64);
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_grad, random_tensor};
    use crate::rng::{Purpose, RngStream};
    use approx::assert_relative_eq;

    #[test]
    fn identity_kernel_is_identity() {
        let x = random_tensor(&[2, 3, 5, 4], 1);
        let mut k = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            k.data[c * 3 + c] = 1.0;
        }
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn all_ones_kernel_counts_overlap() {
        let x = Tensor::from_vec(&[1, 1, 5, 5], vec![1.0; 25]).unwrap();
        let k = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d(&x, &k, 1, 1).unwrap();
        assert_eq!(y.shape, vec![1, 1, 5, 5]);
        assert_eq!(y.data[2 * 5 + 2], 9.0);
        assert_eq!(y.data[0], 4.0);
        assert_eq!(y.data[2], 6.0);
    }

    #[test]
    fn conv_output_shapes() {
        assert_eq!(conv_output_size(8, 3, 2, 1).unwrap(), 4);
        assert_eq!(conv_output_size(7, 3, 2, 1).unwrap(), 4);
        assert_eq!(conv_output_size(7, 1, 2, 0).unwrap(), 4);
        assert!(conv_output_size(1, 5, 1, 1).is_err());
        let x = random_tensor(&[1, 2, 4, 4], 2);
        let k = random_tensor(&[3, 1, 3, 3], 3);
        assert!(matches!(conv2d(&x, &k, 1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_matches_direct_loop() {
        let x = random_tensor(&[2, 3, 7, 6], 4);
        let k = random_tensor(&[4, 3, 3, 3], 5);
        for stride in [1, 2] {
            let y = conv2d(&x, &k, stride, 1).unwrap();
            let (_, _, ho, wo) = y.dims4().unwrap();
            for b in 0..2 {
                for o in 0..4 {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut s = 0.0;
                            for c in 0..3 {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let iy = (oy * stride + ky) as isize - 1;
                                        let ix = (ox * stride + kx) as isize - 1;
                                        if (0..7).contains(&iy) && (0..6).contains(&ix) {
                                            s += x.data[((b * 3 + c) * 7 + iy as usize) * 6 + ix as usize]
                                                * k.data[((o * 3 + c) * 3 + ky) * 3 + kx];
                                        }
                                    }
                                }
                            }
                            assert_relative_eq!(y.data[((b * 4 + o) * ho + oy) * wo + ox], s, epsilon = 1e-12);
                        }
                    }
                }
            }
        }
    }

    /// Scalar loss used by the gradient checks: a fixed random projection of
    /// the layer output, so every output element contributes.
    fn project(y: &Tensor, w: &Tensor) -> f64 {
        y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for (stride, k, pad) in [(1, 3, 1), (2, 3, 1), (2, 1, 0)] {
            let x = random_tensor(&[2, 3, 6, 5], 10);
            let kern = random_tensor(&[4, 3, k, k], 11);
            let y = conv2d(&x, &kern, stride, pad).unwrap();
            let w = random_tensor(&y.shape, 12);
            let (dx, dk) = conv2d_backward(&x, &kern, stride, pad, &w).unwrap();
            check_grad(&x, &dx, |x| project(&conv2d(x, &kern, stride, pad).unwrap(), &w));
            check_grad(&kern, &dk, |k| project(&conv2d(&x, k, stride, pad).unwrap(), &w));
        }
    }

    #[test]
    fn batch_norm_train_normalizes() {
        let x = random_tensor(&[4, 3, 5, 5], 20);
        let bn = BatchNorm::new(3);
        let (y, _) = batch_norm(&x, &bn, Mode::Train).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..4).flat_map(|b| y.data[(b * 3 + c) * 25..][..25].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6);
            // eps keeps the variance a hair under 1
            assert!((v - 1.0).abs() < 1e-4, "{v}");
        }
        let mut bn2 = BatchNorm::new(3);
        bn2.gamma = vec![2.0; 3];
        bn2.beta = vec![3.0; 3];
        let (y2, _) = batch_norm(&x, &bn2, Mode::Train).unwrap();
        for (a, b) in y.data.iter().zip(&y2.data) {
            assert_relative_eq!(*b, 2.0 * a + 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn batch_norm_unit_variance_with_large_spread() {
        // eps is negligible against a variance of ~1e4
        let x = Tensor {
            shape: vec![8, 1, 4, 4],
            data: random_tensor(&[8, 1, 4, 4], 21)
                .data
                .iter()
                .map(|v| 100.0 * v)
                .collect(),
        };
        let (y, _) = batch_norm(&x, &BatchNorm::new(1), Mode::Train).unwrap();
        let n = y.len() as f64;
        let m = y.data.iter().sum::<f64>() / n;
        let v = y.data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        assert!(m.abs() < 1e-6 && (v - 1.0).abs() < 1e-6, "{m} {v}");
    }

    #[test]
    fn batch_norm_rejects_single_sample_in_train() {
        let x = random_tensor(&[1, 2, 3, 3], 22);
        assert!(matches!(
            batch_norm(&x, &BatchNorm::new(2), Mode::Train),
            Err(Error::Contract(_))
        ));
        assert!(batch_norm(&x, &BatchNorm::new(2), Mode::Eval).is_ok());
    }

    #[test]
    fn batch_norm_running_stats() {
        let x = random_tensor(&[4, 2, 3, 3], 23);
        let mut bn = BatchNorm::new(2);
        let (_, cache) = batch_norm(&x, &bn, Mode::Train).unwrap();
        bn.update_running(&cache);
        for c in 0..2 {
            assert_relative_eq!(bn.running_mean[c], 0.1 * cache.mean[c], epsilon = 1e-15);
            assert_relative_eq!(bn.running_var[c], 0.9 + 0.1 * cache.var[c], epsilon = 1e-15);
        }
        let (_, eval_cache) = batch_norm(&x, &bn, Mode::Eval).unwrap();
        let before = bn.clone();
        bn.update_running(&eval_cache);
        assert_eq!(bn, before);
    }

    #[test]
    fn batch_norm_gradients_match_finite_differences() {
        let x = random_tensor(&[3, 2, 4, 3], 30);
        let mut bn = BatchNorm::new(2);
        bn.gamma = vec![1.3, -0.7];
        bn.beta = vec![0.2, 0.5];
        bn.running_mean = vec![0.1, -0.2];
        bn.running_var = vec![0.8, 1.5];
        let w = random_tensor(&x.shape, 31);
        for mode in [Mode::Train, Mode::Eval] {
            let (_, cache) = batch_norm(&x, &bn, mode).unwrap();
            let (dx, dg, db) = batch_norm_backward(&w, &bn, &cache).unwrap();
            check_grad(&x, &dx, |x| project(&batch_norm(x, &bn, mode).unwrap().0, &w));
            let g = Tensor::from_vec(&[2], bn.gamma.clone()).unwrap();
            check_grad(&g, &Tensor::from_vec(&[2], dg).unwrap(), |g| {
                let mut b = bn.clone();
                b.gamma = g.data.clone();
                project(&batch_norm(&x, &b, mode).unwrap().0, &w)
            });
            let be = Tensor::from_vec(&[2], bn.beta.clone()).unwrap();
            check_grad(&be, &Tensor::from_vec(&[2], db).unwrap(), |be| {
                let mut b = bn.clone();
                b.beta = be.data.clone();
                project(&batch_norm(&x, &b, mode).unwrap().0, &w)
            });
        }
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::from_vec(&[1, 2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data, vec![0.0, 2.0]);
        let g = Tensor::from_vec(&[1, 2], vec![5.0, 7.0]).unwrap();
        assert_eq!(relu_backward(&relu(&x), &g).unwrap().data, vec![0.0, 7.0]);
    }

    #[test]
    fn dropout_zero_rate_and_eval_are_identity() {
        let x = random_tensor(&[2, 3, 4, 4], 40);
        let mut rng = RngStream::new(1, Purpose::Dropout, 0);
        for mode in [Mode::Train, Mode::Eval] {
            let (y, mask) = dropout(&x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(y, x);
            assert!(mask.is_none());
        }
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = Tensor::from_vec(&[1, 1_000_000], vec![1.0; 1_000_000]).unwrap();
        let mut rng = RngStream::new(2, Purpose::Dropout, 0);
        let (y, mask) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean = y.data.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        assert!(y.data.iter().all(|&v| v == 0.0 || v == 2.0));
        let g = Tensor::from_vec(&[1, 1_000_000], vec![1.0; 1_000_000]).unwrap();
        assert_eq!(dropout_backward(&g, mask.as_deref()), y);
    }

    #[test]
    fn dense_and_pool_gradients() {
        let x = random_tensor(&[3, 5], 50);
        let wt = random_tensor(&[2, 5], 51);
        let b = vec![0.3, -0.4];
        let w = random_tensor(&[3, 2], 52);
        let (dx, dw, db) = dense_backward(&x, &wt, &w).unwrap();
        check_grad(&x, &dx, |x| project(&dense(x, &wt, &b).unwrap(), &w));
        check_grad(&wt, &dw, |wt| project(&dense(&x, wt, &b).unwrap(), &w));
        let bt = Tensor::from_vec(&[2], b.clone()).unwrap();
        check_grad(&bt, &Tensor::from_vec(&[2], db).unwrap(), |bt| {
            project(&dense(&x, &wt, &bt.data).unwrap(), &w)
        });

        let x4 = random_tensor(&[2, 3, 4, 5], 53);
        let w2 = random_tensor(&[2, 3], 54);
        let dx4 = global_avg_pool_backward(&w2, &x4.shape).unwrap();
        check_grad(&x4, &dx4, |x| project(&global_avg_pool(x).unwrap(), &w2));
    }

    #[test]
    fn dense_forward_value() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 3.0, -1.0]).unwrap();
        assert_eq!(dense(&x, &w, &[0.5, 0.25]).unwrap().data, vec![1.5, 1.25]);
    }
}
