// SPDX-License-Identifier: Apache-2.0

//! Central finite-difference checks. Each returns the worst relative error
//! over its instances.

use gslab_core::losses::{cross_entropy, info_nce, triplet_loss, ContrastiveBatchLayout};
use gslab_core::numerics::layers::*;
use gslab_core::numerics::{
    BackwardScope, ClassifierInput, ClassifierSpec, MicroResNet, MlpSpec, Mode, ModelConfig, OutputGrads, Tensor,
};
use gslab_core::rng;
use rand::Rng;

use super::*;

/// Direct six-loop convolution used as an independent reference.
pub fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, g: ConvGeometry) -> Tensor {
    let (n, c, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (o, k) = (w.dim(0), w.dim(2));
    let ho = (h + 2 * g.pad - k) / g.stride + 1;
    let wo = (wd + 2 * g.pad - k) / g.stride + 1;
    let mut y = Tensor::zeros(&[n, o, ho, wo]);
    for s in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.data()[((oc * c + ic) * k + ky) * k + kx]
                                    * x.data()[((s * c + ic) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    y.data_mut()[((s * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    y
}

const CONV_SHAPES: [(usize, usize, usize); 4] = [(3, 1, 1), (3, 2, 1), (1, 2, 0), (3, 1, 0)];

/// Fast convolution against the direct reference.
pub fn conv_forward_vs_direct() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        for (k, stride, pad) in CONV_SHAPES {
            let x = random_tensor(&[2, 3, 7, 7], seed, 1.0);
            let w = random_tensor(&[4, 3, k, k], seed + 100, 1.0);
            let b = random_tensor(&[4], seed + 200, 1.0);
            let g = ConvGeometry { stride, pad };
            worst = worst.max(rel_err(&conv2d_forward(&x, &w, &b, g).unwrap(), &naive_conv(&x, &w, &b, g)));
        }
    }
    worst
}

pub fn conv() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        for (k, stride, pad) in CONV_SHAPES {
            let g = ConvGeometry { stride, pad };
            let x = random_tensor(&[2, 2, 5, 5], seed, 1.0);
            let w = random_tensor(&[3, 2, k, k], seed + 1000, 1.0);
            let b = random_tensor(&[3], seed + 2000, 1.0);
            let y = conv2d_forward(&x, &w, &b, g).unwrap();
            let r = random_tensor(y.shape(), seed + 3000, 1.0);
            let grads = conv2d_backward(&x, &w, &r, g).unwrap();
            let f = |x: &Tensor, w: &Tensor, b: &Tensor| project(&conv2d_forward(x, w, b, g).unwrap(), &r);
            worst = worst
                .max(rel_err(&grads.input, &numeric_grad(&x, |v| f(v, &w, &b))))
                .max(rel_err(&grads.weight, &numeric_grad(&w, |v| f(&x, v, &b))))
                .max(rel_err(&grads.bias, &numeric_grad(&b, |v| f(&x, &w, v))));
        }
    }
    worst
}

pub fn batchnorm(mode: Mode) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        let x = random_tensor(&[3, 2, 3, 3], seed, 2.0);
        let gamma = random_tensor(&[2], seed + 1, 1.0);
        let beta = random_tensor(&[2], seed + 2, 1.0);
        let r = random_tensor(x.shape(), seed + 3, 1.0);
        let stats = RunningStats {
            mean: vec![0.3, -0.2],
            var: vec![1.5, 0.7],
        };
        let run = |x: &Tensor, g: &Tensor, b: &Tensor| {
            let (y, _) = batchnorm2d_forward(x, g, b, None, Some(&stats), mode).unwrap();
            project(&y, &r)
        };
        let (_, cache) = batchnorm2d_forward(&x, &gamma, &beta, None, Some(&stats), mode).unwrap();
        let grads = batchnorm2d_backward(&cache, &gamma, &r).unwrap();
        worst = worst
            .max(rel_err(&grads.input, &numeric_grad(&x, |v| run(v, &gamma, &beta))))
            .max(rel_err(&grads.gamma, &numeric_grad(&gamma, |v| run(&x, v, &beta))))
            .max(rel_err(&grads.beta, &numeric_grad(&beta, |v| run(&x, &gamma, v))));
    }
    worst
}

pub fn linear() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        let x = random_tensor(&[4, 5], seed, 1.0);
        let w = random_tensor(&[3, 5], seed + 1, 1.0);
        let b = random_tensor(&[3], seed + 2, 1.0);
        let r = random_tensor(&[4, 3], seed + 3, 1.0);
        let grads = linear_backward(&x, &w, &r).unwrap();
        let f = |x: &Tensor, w: &Tensor, b: &Tensor| project(&linear_forward(x, w, b).unwrap(), &r);
        worst = worst
            .max(rel_err(&grads.input, &numeric_grad(&x, |v| f(v, &w, &b))))
            .max(rel_err(&grads.weight, &numeric_grad(&w, |v| f(&x, v, &b))))
            .max(rel_err(&grads.bias, &numeric_grad(&b, |v| f(&x, &w, v))));
    }
    worst
}

pub fn relu() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        // inputs kept clear of the kink by more than the step
        let x = random_tensor(&[2, 3, 2, 2], seed, 1.0).map(|v| if v.abs() < 0.01 { 0.5 } else { v });
        let r = random_tensor(x.shape(), seed + 1, 1.0);
        let d = relu_backward(&x, &r).unwrap();
        worst = worst.max(rel_err(&d, &numeric_grad(&x, |v| project(&relu_forward(v), &r))));
    }
    worst
}

pub fn global_pool() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        let x = random_tensor(&[2, 3, 4, 4], seed, 1.0);
        let r = random_tensor(&[2, 3], seed + 1, 1.0);
        let d = global_avg_pool_backward(x.shape(), &r).unwrap();
        worst = worst.max(rel_err(&d, &numeric_grad(&x, |v| project(&global_avg_pool_forward(v).unwrap(), &r))));
    }
    worst
}

pub fn cross_entropy_loss() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        let logits = random_tensor(&[4, 6], seed, 3.0);
        let mut r = rng::stream(seed, &[1]);
        let labels: Vec<usize> = (0..4).map(|_| r.random_range(0..6)).collect();
        let out = cross_entropy(&logits, &labels).unwrap();
        worst = worst.max(rel_err(&out.grad, &numeric_grad(&logits, |l| cross_entropy(l, &labels).unwrap().value)));
    }
    worst
}

/// Instances within 0.05 of the hinge on any triplet are skipped.
pub fn triplet() -> f64 {
    let mut worst: f64 = 0.0;
    let (mut checked, mut seed) = (0, 0);
    while checked < FD_SEEDS {
        seed += 1;
        let a = random_tensor(&[5, 4], seed, 1.0);
        let p = random_tensor(&[5, 4], seed + 10_000, 1.0);
        let n = random_tensor(&[5, 4], seed + 20_000, 1.0);
        let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if (0..5).any(|i| (d(a.row(i), p.row(i)) - d(a.row(i), n.row(i)) + 1.0).abs() < 0.05) {
            continue;
        }
        let out = triplet_loss(&a, &p, &n, 1.0).unwrap();
        let f = |a: &Tensor, p: &Tensor, n: &Tensor| triplet_loss(a, p, n, 1.0).unwrap().value;
        worst = worst
            .max(rel_err(&out.grad_anchor, &numeric_grad(&a, |v| f(v, &p, &n))))
            .max(rel_err(&out.grad_positive, &numeric_grad(&p, |v| f(&a, v, &n))))
            .max(rel_err(&out.grad_negative, &numeric_grad(&n, |v| f(&a, &p, v))));
        checked += 1;
    }
    worst
}

pub fn info_nce_loss() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_SEEDS {
        for tau in [0.5, 0.07] {
            let e = random_tensor(&[6, 5], seed, 1.0);
            let loss = |v: &Tensor| info_nce(&ContrastiveBatchLayout::interleaved(v.clone()).unwrap(), tau).unwrap().value;
            let out = info_nce(&ContrastiveBatchLayout::interleaved(e.clone()).unwrap(), tau).unwrap();
            worst = worst.max(rel_err(&out.grad, &numeric_grad(&e, loss)));
        }
    }
    worst
}

/// Step for whole-network checks. A 1e-3 step moves hundreds of activations
/// at once and nearly always crosses some ReLU boundary; layers and losses
/// above use `FD_EPS`.
pub const NET_EPS: f64 = 1e-5;

/// Train-mode forward plus loss. Running-stat updates do not affect train-mode outputs.
type ModelLoss<'a> = &'a dyn Fn(&mut MicroResNet, &Tensor) -> (f64, OutputGrads);

/// Worst error over every trainable parameter, or None when the instance is
/// not smooth at the step size: the ε and ε/2 estimates then disagree because
/// a ReLU boundary lies inside the step. Only finite differences decide this.
fn model_error(model: &mut MicroResNet, x: &Tensor, loss: ModelLoss) -> Option<f64> {
    let (_, grads) = loss(model, x);
    model.backward(&grads, BackwardScope::Full).unwrap();
    let names: Vec<String> = model.store().iter().filter(|p| p.trainable).map(|p| p.name.clone()).collect();
    let mut worst: f64 = 0.0;
    for name in names {
        let id = model.store().find(&name).unwrap();
        let analytic = model.store().get(id).grad.clone();
        let value = model.store().get(id).value.clone();
        let mut eval = |v: &Tensor| {
            model.store_mut().get_mut(id).value = v.clone();
            loss(model, x).0
        };
        let numeric = numeric_grad_eps(&value, NET_EPS, &mut eval);
        let half = numeric_grad_eps(&value, NET_EPS / 2.0, &mut eval);
        model.store_mut().get_mut(id).value = value;
        if rel_err(&numeric, &half) > FD_REL_TOL / 10.0 {
            return None;
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    Some(worst)
}

/// Worst error over `FD_SEEDS` smooth instances, and how many draws that took.
fn over_smooth_seeds(mut instance: impl FnMut(u64) -> Option<f64>) -> (f64, u64) {
    let (mut worst, mut accepted, mut seed) = (0.0f64, 0, 0);
    while accepted < FD_SEEDS {
        assert!(seed < 2 * FD_SEEDS, "only {accepted} smooth instances in {seed} draws");
        if let Some(e) = instance(seed) {
            worst = worst.max(e);
            accepted += 1;
        }
        seed += 1;
    }
    (worst, seed)
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        in_channels: 3,
        widths: vec![2, 3],
        input_side: 8,
    }
}

/// Backbone and classifier through cross entropy on a 2-sample batch.
pub fn network_classifier() -> (f64, u64) {
    over_smooth_seeds(|seed| {
        let mut m = MicroResNet::new(tiny_config(), &mut rng::stream(seed, &[1])).unwrap();
        m.attach_classifier(
            ClassifierSpec {
                classes: 3,
                input: ClassifierInput::Features,
            },
            &mut rng::stream(seed, &[2]),
        )
        .unwrap();
        let x = random_tensor(&[2, 3, 8, 8], seed, 1.0);
        model_error(&mut m, &x, &|m, x| {
            let out = m.forward(x, Mode::Train).unwrap();
            let ce = cross_entropy(out.logits.as_ref().unwrap(), &[0, 2]).unwrap();
            (
                ce.value,
                OutputGrads {
                    logits: Some(ce.grad),
                    ..Default::default()
                },
            )
        })
    })
}

/// Backbone and projection MLP through InfoNCE.
pub fn network_simclr() -> (f64, u64) {
    over_smooth_seeds(|seed| {
        let x = random_tensor(&[4, 3, 8, 8], seed + 50, 1.0);
        let mut m = MicroResNet::new(tiny_config(), &mut rng::stream(seed, &[3])).unwrap();
        m.attach_simclr_head(MlpSpec { hidden: 4, out: 5 }, &mut rng::stream(seed, &[4])).unwrap();
        model_error(&mut m, &x, &|m, x| {
            let emb = m.forward(x, Mode::Train).unwrap().embedding.unwrap();
            let l = info_nce(&ContrastiveBatchLayout::interleaved(emb).unwrap(), 0.5).unwrap();
            (
                l.value,
                OutputGrads {
                    embedding: Some(l.grad),
                    ..Default::default()
                },
            )
        })
    })
}

/// Backbone and triplet head through a random projection of the embedding.
pub fn network_triplet_head() -> (f64, u64) {
    over_smooth_seeds(|seed| {
        let x = random_tensor(&[2, 3, 8, 8], seed + 50, 1.0);
        let mut m = MicroResNet::new(tiny_config(), &mut rng::stream(seed, &[5])).unwrap();
        m.attach_triplet_head(4, &mut rng::stream(seed, &[6])).unwrap();
        let r = random_tensor(&[2, 4], seed + 60, 1.0);
        model_error(&mut m, &x, &|m, x| {
            let emb = m.forward(x, Mode::Train).unwrap().embedding.unwrap();
            (
                project(&emb, &r),
                OutputGrads {
                    embedding: Some(r.clone()),
                    ..Default::default()
                },
            )
        })
    })
}
