// SPDX-License-Identifier: Apache-2.0

//! Ledger parsing and the per-spec report table.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub aug_spec: String,
    pub seed: u64,
    pub method: String,
    pub stage: String,
    pub train_acc: f64,
    pub valid_acc: f64,
    pub test_acc: f64,
    pub wall_time_s: f64,
}

impl LedgerRow {
    fn key(&self) -> (&str, u64, &str, &str) {
        (&self.aug_spec, self.seed, &self.method, &self.stage)
    }
}

pub fn parse_ledger(text: &str) -> Result<Vec<LedgerRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: LedgerRow = rec.map_err(|e| Error::Record {
            line: i + 2,
            reason: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ledger(&text)
}

/// Keeps the last row for each (spec, seed, method, stage), at the position
/// of its first appearance.
pub fn dedup_ledger(rows: &[LedgerRow]) -> Vec<LedgerRow> {
    let mut slot: HashMap<(&str, u64, &str, &str), usize> = HashMap::new();
    let mut out: Vec<LedgerRow> = Vec::new();
    for r in rows {
        match slot.get(&r.key()) {
            Some(&i) => out[i] = r.clone(),
            None => {
                slot.insert(r.key(), out.len());
                out.push(r.clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub index: usize,
    pub aug_spec: String,
    pub train_acc: f64,
    pub valid_acc: f64,
    pub test_acc: f64,
}

/// One row per spec, accuracies averaged over seeds, in order of first
/// appearance. Only rows of the given method and stage are used; when
/// unset, those of the first ledger row are taken.
pub fn build_report(rows: &[LedgerRow], method: Option<&str>, stage: Option<&str>) -> Result<Vec<ReportRow>> {
    let rows = dedup_ledger(rows);
    let Some(first) = rows.first() else {
        bail!(Argument, "ledger has no rows");
    };
    let method = method.unwrap_or(&first.method).to_string();
    let stage = stage.unwrap_or(&first.stage).to_string();
    let mut order: Vec<String> = Vec::new();
    let mut acc: HashMap<String, (f64, f64, f64, usize)> = HashMap::new();
    for r in rows.iter().filter(|r| r.method == method && r.stage == stage) {
        let e = acc.entry(r.aug_spec.clone()).or_insert_with(|| {
            order.push(r.aug_spec.clone());
            (0.0, 0.0, 0.0, 0)
        });
        e.0 += r.train_acc;
        e.1 += r.valid_acc;
        e.2 += r.test_acc;
        e.3 += 1;
    }
    if order.is_empty() {
        bail!(Argument, "no ledger rows for method {method:?}, stage {stage:?}");
    }
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let (tr, va, te, n) = acc[&spec];
            let n = n as f64;
            ReportRow {
                index: i + 1,
                aug_spec: spec,
                train_acc: tr / n,
                valid_acc: va / n,
                test_acc: te / n,
            }
        })
        .collect())
}

pub const REPORT_HEADER: [&str; 5] = ["index", "aug_spec", "train_acc", "valid_acc", "test_acc"];

/// CSV with accuracies as percentages to two decimals.
pub fn format_report(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.aug_spec.clone(),
            format!("{:.2}", 100.0 * r.train_acc),
            format!("{:.2}", 100.0 * r.valid_acc),
            format!("{:.2}", 100.0 * r.test_acc),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEDGER: &str = "\
aug_spec,seed,method,stage,train_acc,valid_acc,test_acc,wall_time_s
randomcrop224,0,baseline,pretrain,0.9,0.8,0.7,1.0
\"randomcrop224,hflip\",0,baseline,pretrain,0.5,0.5,0.5,1.0
randomcrop224,1,baseline,pretrain,0.7,0.6,0.5,1.0
randomcrop224,0,baseline,pretrain,0.8,0.8,0.8,1.0
";

    #[test]
    fn dedup_keeps_last() {
        let rows = dedup_ledger(&parse_ledger(LEDGER).unwrap());
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].train_acc, 0.8);
    }

    #[test]
    fn report_averages_in_first_appearance_order() {
        let rep = build_report(&parse_ledger(LEDGER).unwrap(), None, None).unwrap();
        assert_eq!(rep.len(), 2);
        assert_eq!(rep[0].aug_spec, "randomcrop224");
        assert!((rep[0].valid_acc - 0.7).abs() < 1e-12);
        let text = format_report(&rep).unwrap();
        assert_eq!(
            text,
            "index,aug_spec,train_acc,valid_acc,test_acc\n1,randomcrop224,75.00,70.00,65.00\n2,\"randomcrop224,hflip\",50.00,50.00,50.00\n"
        );
    }

    #[test]
    fn bad_row_names_line() {
        let err = parse_ledger("aug_spec,seed,method,stage,train_acc,valid_acc,test_acc,wall_time_s\nx,notanumber,a,b,1,1,1,1\n")
            .unwrap_err();
        assert!(matches!(err, Error::Record { line: 2, .. }));
    }
}
