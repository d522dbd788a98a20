// SPDX-License-Identifier: Apache-2.0

//! Layer kernels with hand-written backward passes.
//!
//! Every kernel that touches a batch splits work per sample; reductions over
//! the batch (weight gradients) are summed in sample order, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use super::tensor::{matmul, matmul_tn, Tensor};
use crate::error::{bail, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
}

/// Output side for a square-kernel convolution.
pub fn conv_out_side(side: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if side + 2 * pad < k || stride == 0 {
        return None;
    }
    Some((side + 2 * pad - k) / stride + 1)
}

// Range of output positions whose input tap `o * stride + off - pad` is inside [0, len).
fn valid_range(len: usize, out_len: usize, stride: usize, off: usize, pad: usize) -> (usize, usize) {
    let lo = if off >= pad {
        0
    } else {
        (pad - off).div_ceil(stride)
    };
    let hi_excl = if len + pad <= off {
        0
    } else {
        ((len - 1 + pad - off) / stride + 1).min(out_len)
    };
    (lo, hi_excl.max(lo))
}

fn conv_shapes(input: &Tensor, weight: &Tensor, bias: &Tensor, g: ConvGeometry) -> Result<[usize; 8]> {
    input.expect_rank(4, "conv2d input")?;
    weight.expect_rank(4, "conv2d weight")?;
    let [n, c, h, w] = [input.dim(0), input.dim(1), input.dim(2), input.dim(3)];
    let [o, ci, kh, kw] = [weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3)];
    if ci != c {
        bail!(Dimension, "conv2d: input has {c} channels, weight expects {ci}");
    }
    if kh != kw {
        bail!(Dimension, "conv2d: only square kernels are supported");
    }
    if bias.shape() != [o] {
        bail!(Dimension, "conv2d: bias shape {:?}, expected [{o}]", bias.shape());
    }
    let (Some(ho), Some(wo)) = (
        conv_out_side(h, kh, g.stride, g.pad),
        conv_out_side(w, kw, g.stride, g.pad),
    ) else {
        bail!(Dimension, "conv2d: kernel {kh} does not fit {h}x{w} with pad {}", g.pad);
    };
    Ok([n, c, h, w, o, kh, ho, wo])
}

/// Row-major `c = a·b + beta·c` with explicit strides, `a` m×k, `b` k×n, `c` m×n.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], (rsa, csa): (usize, usize), b: &[f64], (rsb, csb): (usize, usize), beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (a.len() > (m - 1) * rsa + (k - 1) * csa && b.len() > (k - 1) * rsb + (n - 1) * csb));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel reads or writes.
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

/// Unfolds one sample (c×h×w) into a (c·k·k)×(ho·wo) patch matrix.
fn im2col(xs: &[f64], [c, h, w, k, ho, wo]: [usize; 6], g: ConvGeometry, cols: &mut [f64]) {
    let out_plane = ho * wo;
    for ic in 0..c {
        let xp = &xs[ic * h * w..(ic + 1) * h * w];
        for ky in 0..k {
            let (oy0, oy1) = valid_range(h, ho, g.stride, ky, g.pad);
            for kx in 0..k {
                let row = &mut cols[((ic * k + ky) * k + kx) * out_plane..][..out_plane];
                row.fill(0.0);
                let (ox0, ox1) = valid_range(w, wo, g.stride, kx, g.pad);
                for oy in oy0..oy1 {
                    let iy = oy * g.stride + ky - g.pad;
                    let xrow = &xp[iy * w..(iy + 1) * w];
                    let orow = &mut row[oy * wo..(oy + 1) * wo];
                    for ox in ox0..ox1 {
                        orow[ox] = xrow[ox * g.stride + kx - g.pad];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im(cols: &[f64], [c, h, w, k, ho, wo]: [usize; 6], g: ConvGeometry, dx: &mut [f64]) {
    let out_plane = ho * wo;
    for ic in 0..c {
        let dxp = &mut dx[ic * h * w..(ic + 1) * h * w];
        for ky in 0..k {
            let (oy0, oy1) = valid_range(h, ho, g.stride, ky, g.pad);
            for kx in 0..k {
                let row = &cols[((ic * k + ky) * k + kx) * out_plane..][..out_plane];
                let (ox0, ox1) = valid_range(w, wo, g.stride, kx, g.pad);
                for oy in oy0..oy1 {
                    let iy = oy * g.stride + ky - g.pad;
                    for ox in ox0..ox1 {
                        dxp[iy * w + ox * g.stride + kx - g.pad] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, g: ConvGeometry) -> Result<Tensor> {
    let [n, c, h, w, o, k, ho, wo] = conv_shapes(input, weight, bias, g)?;
    let in_plane = h * w;
    let out_plane = ho * wo;
    let patch = c * k * k;
    let mut out = vec![0.0; n * o * out_plane];
    let (x, wt, b) = (input.data(), weight.data(), bias.data());
    out.par_chunks_mut(o * out_plane)
        .enumerate()
        .for_each_init(
            || vec![0.0; patch * out_plane],
            |cols, (s, sample_out)| {
                im2col(&x[s * c * in_plane..(s + 1) * c * in_plane], [c, h, w, k, ho, wo], g, cols);
                for (oc, plane) in sample_out.chunks_mut(out_plane).enumerate() {
                    plane.fill(b[oc]);
                }
                gemm(o, patch, out_plane, wt, (patch, 1), cols, (out_plane, 1), 1.0, sample_out);
            },
        );
    Tensor::from_vec(&[n, o, ho, wo], out)
}

pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    upstream: &Tensor,
    g: ConvGeometry,
) -> Result<ConvGrads> {
    let bias_probe = Tensor::zeros(&[weight.dim(0)]);
    let [n, c, h, w, o, k, ho, wo] = conv_shapes(input, weight, &bias_probe, g)?;
    if upstream.shape() != [n, o, ho, wo] {
        bail!(Dimension, "conv2d backward: upstream {:?}, expected {:?}", upstream.shape(), [n, o, ho, wo]);
    }
    let in_plane = h * w;
    let out_plane = ho * wo;
    let patch = c * k * k;
    let dims = [c, h, w, k, ho, wo];
    let (x, wt, dy) = (input.data(), weight.data(), upstream.data());

    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let dys = &dy[s * o * out_plane..(s + 1) * o * out_plane];
            let mut cols = vec![0.0; patch * out_plane];
            im2col(&x[s * c * in_plane..(s + 1) * c * in_plane], dims, g, &mut cols);
            // dW_s = dy_s · colsᵀ
            let mut dw = vec![0.0; o * patch];
            gemm(o, out_plane, patch, dys, (out_plane, 1), &cols, (1, out_plane), 0.0, &mut dw);
            // dcols = Wᵀ · dy_s, reusing the patch buffer
            gemm(patch, o, out_plane, wt, (1, patch), dys, (out_plane, 1), 0.0, &mut cols);
            let mut dx = vec![0.0; c * in_plane];
            col2im(&cols, dims, g, &mut dx);
            (dx, dw)
        })
        .collect();

    let mut dx = Vec::with_capacity(n * c * in_plane);
    let mut dw = vec![0.0; weight.len()];
    for (sdx, sdw) in per_sample {
        dx.extend_from_slice(&sdx);
        for (a, b) in dw.iter_mut().zip(&sdw) {
            *a += b;
        }
    }
    let mut db = vec![0.0; o];
    for s in 0..n {
        for (oc, dbv) in db.iter_mut().enumerate() {
            let start = (s * o + oc) * out_plane;
            *dbv += dy[start..start + out_plane].iter().sum::<f64>();
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_vec(&[n, c, h, w], dx)?,
        weight: Tensor::from_vec(weight.shape(), dw)?,
        bias: Tensor::from_vec(&[o], db)?,
    })
}

/// Per-channel running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Values the batch-norm backward pass needs from its forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub mode: Mode,
}

/// Batch norm over (N, H, W) for each channel of an N×C×H×W tensor.
///
/// Train mode normalises with batch statistics and, when `running` is given,
/// folds them into the running averages with momentum 0.1 (unbiased variance).
/// Eval mode reads the running statistics only.
pub fn batchnorm2d_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: Option<&mut RunningStats>,
    eval_stats: Option<&RunningStats>,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    input.expect_rank(4, "batchnorm input")?;
    let [n, c, h, w] = [input.dim(0), input.dim(1), input.dim(2), input.dim(3)];
    if gamma.shape() != [c] || beta.shape() != [c] {
        bail!(Dimension, "batchnorm: affine params must have shape [{c}]");
    }
    let plane = h * w;
    let m = n * plane;
    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut inv_std = vec![0.0; c];
    match mode {
        Mode::Train => {
            if m <= 1 {
                bail!(Argument, "batchnorm: train mode needs more than one value per channel (got N*H*W = {m})");
            }
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    let start = (b * c + ch) * plane;
                    s += x[start..start + plane].iter().sum::<f64>();
                }
                let mu = s / m as f64;
                let mut ss = 0.0;
                for b in 0..n {
                    let start = (b * c + ch) * plane;
                    ss += x[start..start + plane].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                }
                mean[ch] = mu;
                var[ch] = ss / m as f64;
                inv_std[ch] = 1.0 / (var[ch] + BN_EPS).sqrt();
            }
            if let Some(rs) = running {
                let unbias = m as f64 / (m as f64 - 1.0);
                for ch in 0..c {
                    rs.mean[ch] = (1.0 - BN_MOMENTUM) * rs.mean[ch] + BN_MOMENTUM * mean[ch];
                    rs.var[ch] = (1.0 - BN_MOMENTUM) * rs.var[ch] + BN_MOMENTUM * var[ch] * unbias;
                }
            }
        }
        Mode::Eval => {
            let Some(rs) = eval_stats else {
                bail!(State, "batchnorm: eval mode requires running statistics");
            };
            for ch in 0..c {
                mean[ch] = rs.mean[ch];
                inv_std[ch] = 1.0 / (rs.var[ch] + BN_EPS).sqrt();
            }
        }
    }
    let (g, bt) = (gamma.data(), beta.data());
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            for i in start..start + plane {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                y[i] = g[ch] * xh + bt[ch];
            }
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), y)?,
        BatchNormCache {
            xhat: Tensor::from_vec(input.shape(), xhat)?,
            inv_std,
            mode,
        },
    ))
}

pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

pub fn batchnorm2d_backward(cache: &BatchNormCache, gamma: &Tensor, upstream: &Tensor) -> Result<BatchNormGrads> {
    upstream.same_shape(&cache.xhat, "batchnorm backward")?;
    let s = upstream.shape();
    let [n, c, h, w] = [s[0], s[1], s[2], s[3]];
    let plane = h * w;
    let m = (n * plane) as f64;
    let (dy, xh, g) = (upstream.data(), cache.xhat.data(), gamma.data());
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            for i in start..start + plane {
                dgamma[ch] += dy[i] * xh[i];
                dbeta[ch] += dy[i];
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            let k = g[ch] * cache.inv_std[ch];
            for i in start..start + plane {
                dx[i] = match cache.mode {
                    // dx = γ/σ · (dy − mean(dy) − x̂·mean(dy·x̂))
                    Mode::Train => k * (dy[i] - dbeta[ch] / m - xh[i] * dgamma[ch] / m),
                    Mode::Eval => k * dy[i],
                };
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_vec(upstream.shape(), dx)?,
        gamma: Tensor::from_vec(&[c], dgamma)?,
        beta: Tensor::from_vec(&[c], dbeta)?,
    })
}

/// `y = x Wᵀ + b` with `W` stored out×in.
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    input.expect_rank(2, "linear input")?;
    weight.expect_rank(2, "linear weight")?;
    if input.dim(1) != weight.dim(1) {
        bail!(Dimension, "linear: input width {} vs weight {:?}", input.dim(1), weight.shape());
    }
    if bias.shape() != [weight.dim(0)] {
        bail!(Dimension, "linear: bias shape {:?}", bias.shape());
    }
    let mut y = super::tensor::matmul_nt(input, weight)?;
    let o = weight.dim(0);
    for i in 0..y.dim(0) {
        for (v, b) in y.row_mut(i).iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    debug_assert_eq!(y.dim(1), o);
    Ok(y)
}

pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn linear_backward(input: &Tensor, weight: &Tensor, upstream: &Tensor) -> Result<LinearGrads> {
    if upstream.dim(0) != input.dim(0) || upstream.dim(1) != weight.dim(0) {
        bail!(Dimension, "linear backward: upstream {:?}", upstream.shape());
    }
    let dw = matmul_tn(upstream, input)?;
    let dx = matmul(upstream, weight)?;
    let mut db = vec![0.0; weight.dim(0)];
    for i in 0..upstream.dim(0) {
        for (d, g) in db.iter_mut().zip(upstream.row(i)) {
            *d += g;
        }
    }
    Ok(LinearGrads {
        input: dx,
        weight: dw,
        bias: Tensor::from_vec(&[weight.dim(0)], db)?,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Gradient through a ReLU given its forward input.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.same_shape(input, "relu backward")?;
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// N×C×H×W → N×C by averaging each plane.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor> {
    input.expect_rank(4, "global average pool")?;
    let s = input.shape();
    let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
    let data = input
        .data()
        .chunks(plane)
        .map(|p| p.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::from_vec(&[n, c], data)
}

pub fn global_avg_pool_backward(input_shape: &[usize], upstream: &Tensor) -> Result<Tensor> {
    let (n, c, plane) = (input_shape[0], input_shape[1], input_shape[2] * input_shape[3]);
    if upstream.shape() != [n, c] {
        bail!(Dimension, "pool backward: upstream {:?}", upstream.shape());
    }
    let mut data = Vec::with_capacity(n * c * plane);
    for &g in upstream.data() {
        data.extend(std::iter::repeat_n(g / plane as f64, plane));
    }
    Tensor::from_vec(input_shape, data)
}
