// SPDX-License-Identifier: Apache-2.0

//! Training objectives with analytic gradients, all reduced by batch mean.

use crate::error::{bail, Result};
use crate::numerics::Tensor;

pub const DEFAULT_TEMPERATURE: f64 = 0.07;
pub const DEFAULT_MARGIN: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    /// Gradient with respect to the loss input (logits or embeddings).
    pub grad: Tensor,
}

/// Mean negative log-softmax of the true class.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<LossOutput> {
    logits.expect_rank(2, "cross_entropy logits")?;
    let (n, k) = (logits.dim(0), logits.dim(1));
    if labels.len() != n {
        bail!(Dimension, "cross_entropy: {} labels for {n} rows", labels.len());
    }
    if n == 0 {
        bail!(Argument, "cross_entropy on an empty batch");
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        bail!(Argument, "label {bad} outside [0, {k})");
    }
    let mut grad = Tensor::zeros(&[n, k]);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[label];
        let g = grad.row_mut(i);
        for (j, gv) in g.iter_mut().enumerate() {
            *gv = (row[j] - log_z).exp() / n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    let value = total / n as f64;
    if !value.is_finite() {
        return Err(crate::Error::NonFinite("cross_entropy".into()));
    }
    Ok(LossOutput { value, grad })
}

#[derive(Debug, Clone)]
pub struct TripletLossOutput {
    pub value: f64,
    pub grad_anchor: Tensor,
    pub grad_positive: Tensor,
    pub grad_negative: Tensor,
    /// Fraction of triplets with a strictly positive hinge.
    pub active_fraction: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean of `max(0, ‖a−p‖ − ‖a−n‖ + margin)` over the rows.
pub fn triplet_loss(anchor: &Tensor, positive: &Tensor, negative: &Tensor, margin: f64) -> Result<TripletLossOutput> {
    anchor.expect_rank(2, "triplet anchor")?;
    anchor.same_shape(positive, "triplet positive")?;
    anchor.same_shape(negative, "triplet negative")?;
    if margin < 0.0 {
        bail!(Argument, "triplet margin must be >= 0, got {margin}");
    }
    let n = anchor.dim(0);
    if n == 0 {
        bail!(Argument, "triplet loss on an empty batch");
    }
    let mut ga = Tensor::zeros(anchor.shape());
    let mut gp = Tensor::zeros(anchor.shape());
    let mut gn = Tensor::zeros(anchor.shape());
    let mut total = 0.0;
    let mut active = 0usize;
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let (a, p, q) = (anchor.row(i), positive.row(i), negative.row(i));
        let dap = euclid(a, p);
        let dan = euclid(a, q);
        let hinge = dap - dan + margin;
        if hinge <= 0.0 {
            continue;
        }
        total += hinge;
        active += 1;
        // d‖a−p‖/da = (a−p)/‖a−p‖, zero at coincident points
        for j in 0..a.len() {
            let up = if dap > 0.0 { (a[j] - p[j]) / dap } else { 0.0 };
            let un = if dan > 0.0 { (a[j] - q[j]) / dan } else { 0.0 };
            ga.row_mut(i)[j] = scale * (up - un);
            gp.row_mut(i)[j] = -scale * up;
            gn.row_mut(i)[j] = scale * un;
        }
    }
    Ok(TripletLossOutput {
        value: total * scale,
        grad_anchor: ga,
        grad_positive: gp,
        grad_negative: gn,
        active_fraction: active as f64 * scale,
    })
}

/// 2N embeddings plus the index of each row's positive partner.
#[derive(Debug, Clone)]
pub struct ContrastiveBatchLayout {
    pub embeddings: Tensor,
    pub partner: Vec<usize>,
}

impl ContrastiveBatchLayout {
    /// Interleaved views `[a1, b1, a2, b2, ...]`.
    pub fn interleaved(embeddings: Tensor) -> Result<Self> {
        embeddings.expect_rank(2, "contrastive embeddings")?;
        let rows = embeddings.dim(0);
        if rows % 2 != 0 {
            bail!(Argument, "contrastive batch needs an even number of views, got {rows}");
        }
        let partner = (0..rows).map(|i| i ^ 1).collect();
        Ok(ContrastiveBatchLayout { embeddings, partner })
    }

    fn validate(&self) -> Result<()> {
        let rows = self.embeddings.dim(0);
        if self.partner.len() != rows {
            bail!(Dimension, "partner map has {} entries for {rows} rows", self.partner.len());
        }
        for (i, &p) in self.partner.iter().enumerate() {
            if p >= rows || p == i || self.partner[p] != i {
                bail!(Argument, "partner map must be a fixed-point-free involution (row {i} -> {p})");
            }
        }
        if rows < 4 {
            bail!(Argument, "contrastive loss needs at least 2 pairs, got {} views", rows);
        }
        Ok(())
    }
}

/// Normalized-temperature cross entropy over cosine similarities, averaged
/// over every view acting as an anchor.
pub fn info_nce(layout: &ContrastiveBatchLayout, temperature: f64) -> Result<LossOutput> {
    layout.embeddings.expect_rank(2, "contrastive embeddings")?;
    layout.validate()?;
    if !(temperature > 0.0) {
        bail!(Argument, "temperature must be > 0, got {temperature}");
    }
    let e = &layout.embeddings;
    let (m, d) = (e.dim(0), e.dim(1));
    let mut z = Tensor::zeros(&[m, d]);
    let mut norms = vec![0.0; m];
    for i in 0..m {
        let nrm = e.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(nrm > 0.0) || !nrm.is_finite() {
            bail!(Argument, "embedding row {i} has zero or non-finite norm");
        }
        norms[i] = nrm;
        for (zv, ev) in z.row_mut(i).iter_mut().zip(e.row(i)) {
            *zv = ev / nrm;
        }
    }
    let sim = crate::numerics::tensor::matmul_nt(&z, &z)?;
    // coefficient matrix dL/ds_ij (s = cosine / τ)
    let mut coef = vec![0.0; m * m];
    let mut total = 0.0;
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        let row: Vec<f64> = sim.row(i).iter().map(|s| s / temperature).collect();
        let max = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        let log_z = max + sum.ln();
        let p = layout.partner[i];
        total += log_z - row[p];
        for j in 0..m {
            if j != i {
                coef[i * m + j] = (row[j] - log_z).exp() * inv_m;
            }
        }
        coef[i * m + p] -= inv_m;
    }
    let mut grad = Tensor::zeros(&[m, d]);
    for i in 0..m {
        // dL/dz_i = Σ_j (c_ij + c_ji) z_j / τ
        let mut dz = vec![0.0; d];
        for j in 0..m {
            let c = (coef[i * m + j] + coef[j * m + i]) / temperature;
            if c != 0.0 {
                for (dv, zv) in dz.iter_mut().zip(z.row(j)) {
                    *dv += c * zv;
                }
            }
        }
        let zi = z.row(i);
        let proj: f64 = zi.iter().zip(&dz).map(|(a, b)| a * b).sum();
        for (k, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = (dz[k] - zi[k] * proj) / norms[i];
        }
    }
    let value = total * inv_m;
    if !value.is_finite() {
        return Err(crate::Error::NonFinite("info_nce".into()));
    }
    Ok(LossOutput { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ce_uniform_logits_is_ln_k() {
        let l = cross_entropy(&Tensor::zeros(&[3, 25]), &[0, 7, 24]).unwrap();
        assert!((l.value - 25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_saturated_prediction() {
        let mut logits = Tensor::zeros(&[1, 4]);
        logits.data_mut()[2] = 50.0;
        assert!(cross_entropy(&logits, &[2]).unwrap().value < 1e-20);
    }

    #[test]
    fn ce_label_out_of_range() {
        assert!(matches!(cross_entropy(&Tensor::zeros(&[1, 3]), &[3]), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn triplet_degenerate_cases() {
        let a = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let n = Tensor::from_vec(&[1, 2], vec![2.0, 0.0]).unwrap();
        assert_eq!(triplet_loss(&a, &a, &n, 1.0).unwrap().value, 0.0);
        let same = triplet_loss(&a, &a, &a, 1.0).unwrap();
        assert_eq!(same.value, 1.0);
        assert!(triplet_loss(&a, &a, &Tensor::zeros(&[1, 3]), 1.0).is_err());
    }

    #[test]
    fn info_nce_orthonormal_pairs() {
        let e = Tensor::from_vec(&[4, 2], vec![1., 0., 1., 0., 0., 1., 0., 1.]).unwrap();
        let l = info_nce(&ContrastiveBatchLayout::interleaved(e).unwrap(), 1.0).unwrap();
        assert!((l.value - (1.0 + 2.0 / std::f64::consts::E).ln()).abs() < 1e-9);
    }

    #[test]
    fn info_nce_single_pair_rejected() {
        let e = Tensor::from_vec(&[2, 2], vec![1., 0., 0., 1.]).unwrap();
        assert!(info_nce(&ContrastiveBatchLayout::interleaved(e).unwrap(), 0.07).is_err());
    }

    #[test]
    fn info_nce_rejects_bad_partner_map() {
        let layout = ContrastiveBatchLayout {
            embeddings: Tensor::full(&[4, 2], 1.0),
            partner: vec![1, 2, 3, 0],
        };
        assert!(info_nce(&layout, 0.5).is_err());
    }
}
