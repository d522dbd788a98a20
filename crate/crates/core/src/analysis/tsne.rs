// SPDX-License-Identifier: Apache-2.0

//! Exact t-SNE.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::numerics::Tensor;
use crate::rng;

pub const MAX_POINTS: usize = 5000;
const ENTROPY_TOL: f64 = 1e-5;
const MIN_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    /// N×2 layout.
    pub points: Tensor,
    /// `(iteration, KL(P‖Q))`, starting at iteration 0 and every 50 after.
    pub kl_trace: Vec<(usize, f64)>,
}

impl TsneResult {
    pub fn initial_kl(&self) -> f64 {
        self.kl_trace.first().map_or(f64::NAN, |k| k.1)
    }

    pub fn final_kl(&self) -> f64 {
        self.kl_trace.last().map_or(f64::NAN, |k| k.1)
    }
}

fn sq_distances(x: &Tensor) -> Vec<f64> {
    let n = x.dim(0);
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = xi.iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    });
    d
}

/// Conditional row `p_{j|i}` whose entropy matches `ln(perplexity)`.
fn calibrate_row(dist: &[f64], i: usize, target: f64) -> Vec<f64> {
    let n = dist.len();
    let mut beta = 1.0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut p = vec![0.0; n];
    // distances are shifted by the nearest neighbour for numerical range
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    for _ in 0..200 {
        let mut sum = 0.0;
        for j in 0..n {
            p[j] = if j == i { 0.0 } else { (-(dist[j] - dmin) * beta).exp() };
            sum += p[j];
        }
        let mut h = 0.0;
        for j in 0..n {
            p[j] /= sum;
            if p[j] > 0.0 {
                h -= p[j] * p[j].ln();
            }
        }
        let diff = h - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

/// Symmetric joint affinities, normalised to sum to one.
pub fn joint_probabilities(x: &Tensor, perplexity: f64) -> Vec<f64> {
    let n = x.dim(0);
    let d = sq_distances(x);
    let target = perplexity.ln();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| calibrate_row(&d[i * n..(i + 1) * n], i, target))
        .collect();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((rows[i][j] + rows[j][i]) / (2.0 * n as f64)).max(MIN_PROB);
        }
        p[i * n + i] = 0.0;
    }
    p
}

/// Student-t kernel numerators `1 / (1 + |yi - yj|²)` and their total.
fn q_numerators(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut num = vec![0.0; n * n];
    num.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                *v = 1.0 / (1.0 + dx * dx + dy * dy);
            }
        }
    });
    // row sums first, then rows in order, so the total is thread-count independent
    let row_sums: Vec<f64> = num.par_chunks(n).map(|r| r.iter().sum()).collect();
    let total = row_sums.iter().sum();
    (num, total)
}

fn kl_divergence(p: &[f64], num: &[f64], total: f64) -> f64 {
    let mut kl = 0.0;
    for (idx, &pij) in p.iter().enumerate() {
        if pij > 0.0 {
            let q = (num[idx] / total).max(MIN_PROB);
            kl += pij * (pij / q).ln();
        }
    }
    kl
}

pub fn tsne(x: &Tensor, cfg: &TsneConfig) -> Result<TsneResult> {
    x.expect_rank(2, "t-SNE input")?;
    let n = x.dim(0);
    if n > MAX_POINTS {
        bail!(Argument, "exact t-SNE supports at most {MAX_POINTS} points, got {n}");
    }
    if !(cfg.perplexity > 0.0) || 3.0 * cfg.perplexity >= (n as f64 - 1.0) {
        bail!(Argument, "perplexity {} infeasible for {n} points (needs perplexity < (N-1)/3)", cfg.perplexity);
    }
    if !(cfg.learning_rate > 0.0) || cfg.exaggeration < 1.0 {
        bail!(Argument, "t-SNE needs learning_rate > 0 and exaggeration >= 1");
    }
    x.ensure_finite("t-SNE input")?;
    let p = joint_probabilities(x, cfg.perplexity);

    let normal = Normal::new(0.0, 1e-4).expect("valid std");
    let mut r = rng::stream(cfg.seed, &[rng::tag::SAMPLE]);
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut r)).collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut kl_trace = Vec::new();

    for it in 0..=cfg.iterations {
        let (num, total) = q_numerators(&y, n);
        if it % 50 == 0 || it == cfg.iterations {
            kl_trace.push((it, kl_divergence(&p, &num, total)));
        }
        if it == cfg.iterations {
            break;
        }
        let exag = if it < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        // dC/dyi = 4 Σj (pij - qij) num_ij (yi - yj)
        let grad: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let (mut gx, mut gy) = (0.0, 0.0);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let w = (exag * p[i * n + j] - num[i * n + j] / total) * num[i * n + j];
                    gx += w * (y[2 * i] - y[2 * j]);
                    gy += w * (y[2 * i + 1] - y[2 * j + 1]);
                }
                [4.0 * gx, 4.0 * gy]
            })
            .collect();
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        for c in 0..2 {
            let m = (0..n).map(|i| y[2 * i + c]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[2 * i + c] -= m;
            }
        }
    }
    Ok(TsneResult {
        points: Tensor::from_vec(&[n, 2], y)?,
        kl_trace,
    })
}

/// Mean silhouette coefficient of `points` under `labels` (Euclidean).
/// Points alone in their cluster score 0.
pub fn silhouette(points: &Tensor, labels: &[usize]) -> Result<f64> {
    points.expect_rank(2, "silhouette points")?;
    let n = points.dim(0);
    if labels.len() != n {
        bail!(Dimension, "{} labels for {n} points", labels.len());
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        bail!(Argument, "silhouette needs at least two clusters");
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    let d: f64 = points
                        .row(i)
                        .iter()
                        .zip(points.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    sums[labels[j]] += d;
                }
            }
            let own = labels[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Lloyd's k-means with farthest-point initialisation from row 0.
pub fn kmeans(points: &Tensor, k: usize, iterations: usize) -> Result<Vec<usize>> {
    points.expect_rank(2, "k-means points")?;
    let (n, d) = (points.dim(0), points.dim(1));
    if k == 0 || k > n {
        bail!(Argument, "k-means needs 1 <= k <= {n}, got {k}");
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![points.row(0).to_vec()];
    while centers.len() < k {
        let far = (0..n)
            .max_by(|&a, &b| {
                let da = centers.iter().map(|c| dist(points.row(a), c)).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| dist(points.row(b), c)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("n >= 1");
        centers.push(points.row(far).to_vec());
    }
    let mut assign = vec![0usize; n];
    for _ in 0..iterations.max(1) {
        let next: Vec<usize> = (0..n)
            .map(|i| {
                (0..k)
                    .min_by(|&a, &b| dist(points.row(i), &centers[a]).total_cmp(&dist(points.row(i), &centers[b])))
                    .expect("k >= 1")
            })
            .collect();
        let changed = next != assign;
        assign = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..d {
                center[j] = members.iter().map(|&i| points.row(i)[j]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(assign)
}
