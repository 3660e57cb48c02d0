//! Central finite-difference checks for hand-written gradients.

use rand::Rng;

use super::layers::{
    batch_norm, batch_norm_backward, conv2d, conv2d_backward, dense, dense_backward, dropout, dropout_backward,
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm,
};
use super::model::{residual_block, residual_block_backward};
use super::{mse_loss, Block, Mode, ModelState, ResNetConfig, Tensor};
use crate::rng::{Purpose, RngStream};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Entries uniform in [-1, 1), reproducible from `seed`.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = RngStream::new(seed, Purpose::Init, u64::MAX);
    let mut t = Tensor::zeros(shape);
    for v in &mut t.data {
        *v = rng.random_range(-1.0..1.0);
    }
    t
}

/// Largest relative error between `analytic` and the central difference of
/// `f` around `x`, taken over every coordinate. Denominators are floored at
/// 1e-6 so that coordinates with a vanishing gradient are compared in
/// absolute terms.
pub fn max_relative_error(x: &Tensor, analytic: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> f64 {
    assert_eq!(x.shape, analytic.shape, "gradient shape");
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + STEP;
        let up = f(&probe);
        probe.data[i] = orig - STEP;
        let down = f(&probe);
        probe.data[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic.data[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
pub(crate) fn check_grad(x: &Tensor, analytic: &Tensor, f: impl FnMut(&Tensor) -> f64) {
    let err = max_relative_error(x, analytic, f);
    assert!(err < TOLERANCE, "max relative error {err:e}");
}

/// Two-block model on a 2-channel 8x8 input.
pub fn tiny_config() -> ResNetConfig {
    ResNetConfig {
        stem_filters: 3,
        num_blocks: 2,
        block_strides: vec![1, 2],
        channel_growth: 2,
        dropout_rate: 0.0,
        input_channels: 2,
        input_height: 8,
        input_width: 8,
    }
}

/// Moves BN shifts, scales and running statistics away from their initial
/// values so eval-mode checks exercise every term.
pub fn perturb(model: &mut ModelState, seed: u64) {
    let names: Vec<String> = model.arrays().iter().map(|a| a.name.clone()).collect();
    for (i, (a, name)) in model.arrays_mut().into_iter().zip(names).enumerate() {
        let r = random_tensor(&[a.len()], seed + i as u64);
        for (v, d) in a.iter_mut().zip(&r.data) {
            if name.ends_with("running_var") {
                *v = 1.0 + 0.5 * d;
            } else if !name.ends_with("kernel") && !name.ends_with("weight") {
                *v += 0.3 * d;
            }
        }
    }
}

fn dot(y: &Tensor, w: &Tensor) -> f64 {
    y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
}

fn no_dropout() -> RngStream {
    RngStream::new(0, Purpose::Dropout, 0)
}

/// Worst relative error over the input and every trainable array of the
/// tiny model, through the MSE loss.
pub fn full_model_error(mode: Mode) -> f64 {
    let mut model = ModelState::new(tiny_config(), 7).expect("valid config");
    perturb(&mut model, 200);
    let x = random_tensor(&[2, 2, 8, 8], 8);
    let truth = random_tensor(&[2, 2], 9);
    let loss = |m: &ModelState, x: &Tensor| {
        let (p, _) = m.forward(x, mode, &mut no_dropout()).expect("forward");
        mse_loss(&p, &truth).expect("loss").0
    };
    let (p, cache) = model.forward(&x, mode, &mut no_dropout()).expect("forward");
    let (_, gp) = mse_loss(&p, &truth).expect("loss");
    let (g, dx) = model.backward(&cache, &gp).expect("backward");
    let mut worst = max_relative_error(&x, &dx, |x| loss(&model, x));
    for (i, a) in g.trainable().iter().enumerate() {
        let analytic = Tensor::from_vec(&[a.len()], a.to_vec()).expect("shape");
        let probe = Tensor::from_vec(&[a.len()], model.trainable()[i].to_vec()).expect("shape");
        let err = max_relative_error(&probe, &analytic, |t| {
            let mut m = model.clone();
            *m.trainable_mut()[i] = t.data.clone();
            loss(&m, &x)
        });
        worst = worst.max(err);
    }
    worst
}

/// Runs every layer check and the full-model check; one `(name, max
/// relative error)` entry each.
pub fn suite() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (stride, k, pad) in [(1, 3, 1), (2, 3, 1), (2, 1, 0)] {
        let x = random_tensor(&[2, 4, 8, 8], 10);
        let kern = random_tensor(&[4, 4, k, k], 11);
        let y = conv2d(&x, &kern, stride, pad).expect("conv");
        let w = random_tensor(&y.shape, 12);
        let (dx, dk) = conv2d_backward(&x, &kern, stride, pad, &w).expect("conv backward");
        let e = max_relative_error(&x, &dx, |x| dot(&conv2d(x, &kern, stride, pad).unwrap(), &w)).max(
            max_relative_error(&kern, &dk, |k| dot(&conv2d(&x, k, stride, pad).unwrap(), &w)),
        );
        out.push((format!("conv2d {k}x{k} stride {stride}"), e));
    }

    let x = random_tensor(&[2, 4, 8, 8], 20);
    let mut bn = BatchNorm::new(4);
    bn.gamma = random_tensor(&[4], 21).data;
    bn.beta = random_tensor(&[4], 22).data;
    bn.running_mean = random_tensor(&[4], 23).data;
    bn.running_var = random_tensor(&[4], 24).data.iter().map(|v| 1.0 + 0.5 * v).collect();
    let w = random_tensor(&x.shape, 25);
    for mode in [Mode::Train, Mode::Eval] {
        let (_, cache) = batch_norm(&x, &bn, mode).expect("bn");
        let (dx, dg, db) = batch_norm_backward(&w, &bn, &cache).expect("bn backward");
        let with = |g: &[f64], b: &[f64], x: &Tensor| {
            let mut p = bn.clone();
            p.gamma = g.to_vec();
            p.beta = b.to_vec();
            dot(&batch_norm(x, &p, mode).unwrap().0, &w)
        };
        let gt = Tensor::from_vec(&[4], bn.gamma.clone()).unwrap();
        let bt = Tensor::from_vec(&[4], bn.beta.clone()).unwrap();
        let e = max_relative_error(&x, &dx, |x| with(&bn.gamma, &bn.beta, x))
            .max(max_relative_error(&gt, &Tensor::from_vec(&[4], dg).unwrap(), |g| {
                with(&g.data, &bn.beta, &x)
            }))
            .max(max_relative_error(&bt, &Tensor::from_vec(&[4], db).unwrap(), |b| {
                with(&bn.gamma, &b.data, &x)
            }));
        out.push((format!("batch_norm {mode:?}").to_lowercase(), e));
    }

    let x = random_tensor(&[2, 4, 8, 8], 30);
    let w = random_tensor(&x.shape, 31);
    let dx = relu_backward(&relu(&x), &w).expect("relu");
    out.push(("relu".into(), max_relative_error(&x, &dx, |x| dot(&relu(x), &w))));

    let mut rng = RngStream::new(3, Purpose::Dropout, 0);
    let (_, mask) = dropout(&x, 0.5, Mode::Train, &mut rng).expect("dropout");
    let dx = dropout_backward(&w, mask.as_deref());
    let e = max_relative_error(&x, &dx, |x| {
        let mut rng = RngStream::new(3, Purpose::Dropout, 0);
        dot(&dropout(x, 0.5, Mode::Train, &mut rng).unwrap().0, &w)
    });
    out.push(("dropout".into(), e));

    let w2 = random_tensor(&[2, 4], 32);
    let dx = global_avg_pool_backward(&w2, &x.shape).expect("pool");
    out.push((
        "global_avg_pool".into(),
        max_relative_error(&x, &dx, |x| dot(&global_avg_pool(x).unwrap(), &w2)),
    ));

    let f = random_tensor(&[2, 8], 33);
    let wt = random_tensor(&[2, 8], 34);
    let b = vec![0.1, -0.2];
    let w3 = random_tensor(&[2, 2], 35);
    let (dx, dw, db) = dense_backward(&f, &wt, &w3).expect("dense");
    let bt = Tensor::from_vec(&[2], b.clone()).unwrap();
    let e = max_relative_error(&f, &dx, |f| dot(&dense(f, &wt, &b).unwrap(), &w3))
        .max(max_relative_error(&wt, &dw, |wt| dot(&dense(&f, wt, &b).unwrap(), &w3)))
        .max(max_relative_error(&bt, &Tensor::from_vec(&[2], db).unwrap(), |b| {
            dot(&dense(&f, &wt, &b.data).unwrap(), &w3)
        }));
    out.push(("dense".into(), e));

    let truth = random_tensor(&[2, 2], 36);
    let p = random_tensor(&[2, 2], 37);
    let (_, g) = mse_loss(&p, &truth).expect("loss");
    out.push((
        "mse_loss".into(),
        max_relative_error(&p, &g, |p| mse_loss(p, &truth).unwrap().0),
    ));

    let mut model = ModelState::new(tiny_config(), 40).expect("valid config");
    perturb(&mut model, 300);
    let block = model.blocks[1].clone();
    let x = random_tensor(&[2, 3, 8, 8], 41);
    for mode in [Mode::Train, Mode::Eval] {
        let (y, cache) = residual_block(&x, &block, 0.0, mode, &mut no_dropout()).expect("block");
        let w = random_tensor(&y.shape, 42);
        let (dx, g) = residual_block_backward(&w, &block, &cache).expect("block backward");
        let run = |x: &Tensor, b: &Block| dot(&residual_block(x, b, 0.0, mode, &mut no_dropout()).unwrap().0, &w);
        let mut e = max_relative_error(&x, &dx, |x| run(x, &block));
        let kernels = [
            (&block.conv1.kernel, &g.conv1.kernel),
            (&block.conv2.kernel, &g.conv2.kernel),
            (
                &block.shortcut.as_ref().unwrap().kernel,
                &g.shortcut.as_ref().unwrap().kernel,
            ),
        ];
        for (which, (k, gk)) in kernels.into_iter().enumerate() {
            e = e.max(max_relative_error(k, gk, |k| {
                let mut b = block.clone();
                match which {
                    0 => b.conv1.kernel = k.clone(),
                    1 => b.conv2.kernel = k.clone(),
                    _ => b.shortcut.as_mut().unwrap().kernel = k.clone(),
                }
                run(&x, &b)
            }));
        }
        out.push((format!("residual_block {mode:?}").to_lowercase(), e));
    }

    for mode in [Mode::Train, Mode::Eval] {
        out.push((format!("full model {mode:?}").to_lowercase(), full_model_error(mode)));
    }
    out
}
