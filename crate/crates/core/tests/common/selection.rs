// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference for top-k augmentation selection.

use std::collections::BTreeMap;

use gslab_core::analysis::{LedgerRow, Strategy};
use gslab_core::rng;
use rand::Rng;

/// Two-sided Student-t tail by Simpson integration. With x = √df·tan θ the
/// density becomes ∝ cos^(df−1) θ on (−π/2, π/2), which is smooth.
pub fn t_tail_p(t: f64, df: usize) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let f = |th: f64| th.cos().powi(df as i32 - 1);
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    (simpson(theta, half) / simpson(0.0, half)).min(1.0)
}

/// t statistic and p for paired samples, zero-variance cases included.
pub fn paired(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return if m == 0.0 { (0.0, 1.0) } else { (f64::INFINITY.copysign(m), 0.0) };
    }
    let t = m / (sd / n.sqrt());
    (t, t_tail_p(t, xs.len() - 1))
}

const TIE: f64 = 1e-9;

/// Expected top-k: each candidate's rank is the number of candidates that beat it.
pub fn oracle_top_k(table: &BTreeMap<String, BTreeMap<u64, f64>>, strategy: Strategy, k: usize, baseline: &str) -> Vec<String> {
    // (spec, key) where a smaller key ranks higher
    let mut cands: Vec<(String, f64)> = Vec::new();
    for (spec, runs) in table {
        let xs: Vec<f64> = runs.values().copied().collect();
        match strategy {
            Strategy::Mean => cands.push((spec.clone(), -xs.iter().sum::<f64>() / xs.len() as f64)),
            Strategy::TTest => {
                if spec == baseline {
                    continue;
                }
                let ys: Vec<f64> = table[baseline].values().copied().collect();
                let diff: f64 = xs.iter().sum::<f64>() / xs.len() as f64 - ys.iter().sum::<f64>() / ys.len() as f64;
                if diff > 0.0 {
                    cands.push((spec.clone(), paired(&xs, &ys).1));
                }
            }
        }
    }
    let beats = |a: &(String, f64), b: &(String, f64)| a.1 < b.1 - TIE || ((a.1 - b.1).abs() <= TIE && a.0 < b.0);
    let mut ranked: Vec<(usize, String)> =
        cands.iter().map(|c| (cands.iter().filter(|o| beats(o, c)).count(), c.0.clone())).collect();
    ranked.sort();
    ranked.into_iter().take(k).map(|(_, s)| s).collect()
}

/// Random ledger: `specs` specs × `seeds` seeds of baseline/pretrain rows, some
/// specs exact copies of others (ties), plus rows of another method that must be ignored.
pub fn random_ledger(seed: u64, specs: usize, seeds: usize, baseline: &str) -> Vec<LedgerRow> {
    let mut r = rng::stream(seed, &[0x1ed]);
    let mut rows = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    for i in 0..specs {
        let name = if i == 0 { baseline.to_string() } else { format!("{baseline},x{i:02}") };
        let v: Vec<f64> = if i > 0 && r.random_bool(0.2) {
            vectors[r.random_range(0..vectors.len())].clone()
        } else {
            (0..seeds).map(|_| r.random_range(0.5..1.0)).collect()
        };
        for (s, &acc) in v.iter().enumerate() {
            let row = |method: &str, valid: f64| LedgerRow {
                aug_spec: name.clone(),
                seed: s as u64,
                method: method.into(),
                stage: "pretrain".into(),
                train_acc: 1.0,
                valid_acc: valid,
                test_acc: valid,
                wall_time_s: 0.0,
            };
            rows.push(row("baseline", acc));
            rows.push(row("simclr", 1.0 - acc));
        }
        vectors.push(v);
    }
    rows
}
