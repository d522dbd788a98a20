// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use gslab_core::numerics::Tensor;
use gslab_core::rng;
use rand::Rng;

pub const FD_EPS: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_SEEDS: u64 = 20;

pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut r = rng::stream(seed, &[0x7e57]);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| scale * r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Central differences of a scalar function over every element of `x`.
pub fn numeric_grad(x: &Tensor, f: impl FnMut(&Tensor) -> f64) -> Tensor {
    numeric_grad_eps(x, FD_EPS, f)
}

pub fn numeric_grad_eps(x: &Tensor, eps: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    g
}

/// Gradients with both norms below this are treated as exactly zero
/// (e.g. a conv bias feeding batch norm), where only round-off remains.
pub const FD_ZERO_FLOOR: f64 = 1e-7;

/// ‖a − b‖ / max(‖a‖, ‖b‖), zero when both vanish.
pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.norm().max(b.norm());
    if scale < FD_ZERO_FLOOR {
        0.0
    } else {
        diff / scale
    }
}

pub fn assert_grad(what: &str, analytic: &Tensor, numeric: &Tensor) {
    let e = rel_err(analytic, numeric);
    assert!(e < FD_REL_TOL, "{what}: relative error {e:e}");
}

/// Σ r ⊙ y, the scalar used to check layers with tensor outputs.
pub fn project(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub mod gradcheck;
pub mod selection;
