// SPDX-License-Identifier: Apache-2.0

//! Augmentation selection from per-seed validation accuracies.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::{dedup_ledger, LedgerRow};
use super::stats::{mean, paired_t_test};
use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracies {
    pub valid: f64,
    pub test: f64,
}

/// Accuracies keyed by (spec, seed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugRunTable {
    rows: BTreeMap<(String, u64), Accuracies>,
}

impl AugRunTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: &str, seed: u64, valid: f64, test: f64) {
        self.rows.insert((spec.to_string(), seed), Accuracies { valid, test });
    }

    /// Rows of one method and stage; later duplicates win.
    pub fn from_ledger(rows: &[LedgerRow], method: &str, stage: &str) -> Self {
        let mut t = Self::new();
        for r in dedup_ledger(rows).iter().filter(|r| r.method == method && r.stage == stage) {
            t.insert(&r.aug_spec, r.seed, r.valid_acc, r.test_acc);
        }
        t
    }

    pub fn specs(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|(s, _)| s.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Seed -> validation accuracy for one spec.
    pub fn valid_by_seed(&self, spec: &str) -> BTreeMap<u64, f64> {
        self.rows
            .iter()
            .filter(|((s, _), _)| s == spec)
            .map(|((_, seed), a)| (*seed, a.valid))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Paired t-test against a baseline spec, smallest p first.
    TTest,
    /// Highest mean validation accuracy first.
    Mean,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ttest" => Ok(Strategy::TTest),
            "mean" => Ok(Strategy::Mean),
            _ => Err(Error::Parse(format!("unknown strategy {s:?} (expected ttest or mean)"))),
        }
    }
}

pub const DEFAULT_TOP_K: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub spec: String,
    /// p-value for the t-test strategy, mean validation accuracy for the mean strategy.
    pub score: f64,
    pub mean_improvement: Option<f64>,
}

/// Ranks specs and returns the first `k`. The t-test strategy keeps only
/// specs whose mean accuracy beats the baseline over matched seeds, so it
/// may return fewer than `k`. Ties break on the spec string.
pub fn select_top_k(table: &AugRunTable, strategy: Strategy, k: usize, baseline: &str) -> Result<Vec<Ranked>> {
    let specs = table.specs();
    if k > specs.len() {
        bail!(Argument, "k = {k} exceeds the {} specs in the table", specs.len());
    }
    let mut ranked = Vec::new();
    match strategy {
        Strategy::Mean => {
            for s in &specs {
                let v: Vec<f64> = table.valid_by_seed(s).into_values().collect();
                ranked.push(Ranked {
                    spec: s.to_string(),
                    score: mean(&v),
                    mean_improvement: None,
                });
            }
            ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.spec.cmp(&b.spec)));
        }
        Strategy::TTest => {
            let base = table.valid_by_seed(baseline);
            if base.is_empty() {
                bail!(Argument, "baseline spec {baseline:?} not in the table");
            }
            for s in specs.iter().filter(|s| **s != baseline) {
                let own = table.valid_by_seed(s);
                if own.keys().ne(base.keys()) {
                    bail!(Argument, "spec {s:?} does not share the baseline's seed set");
                }
                let xs: Vec<f64> = own.into_values().collect();
                let ys: Vec<f64> = base.values().copied().collect();
                let improvement = mean(&xs) - mean(&ys);
                if improvement <= 0.0 {
                    continue;
                }
                ranked.push(Ranked {
                    spec: s.to_string(),
                    score: paired_t_test(&xs, &ys)?.p,
                    mean_improvement: Some(improvement),
                });
            }
            ranked.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.spec.cmp(&b.spec)));
        }
    }
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_strategy_sorts() {
        let mut t = AugRunTable::new();
        for (s, v) in [("a", 0.80), ("b", 0.75), ("c", 0.90)] {
            t.insert(s, 0, v, 0.0);
        }
        let top: Vec<String> = select_top_k(&t, Strategy::Mean, 2, "a").unwrap().into_iter().map(|r| r.spec).collect();
        assert_eq!(top, ["c", "a"]);
        assert!(select_top_k(&t, Strategy::Mean, 4, "a").is_err());
    }

    #[test]
    fn ttest_filters_worse_specs() {
        let mut t = AugRunTable::new();
        for seed in 0..3u64 {
            let s = seed as f64 * 0.01;
            t.insert("base", seed, 0.70 + s, 0.0);
            t.insert("good", seed, 0.75 + s + 0.001 * seed as f64, 0.0);
            t.insert("bad", seed, 0.60 + s + 0.002 * seed as f64, 0.0);
        }
        let top = select_top_k(&t, Strategy::TTest, 2, "base").unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].spec, "good");
        assert!(select_top_k(&t, Strategy::TTest, 1, "missing").is_err());
    }
}
