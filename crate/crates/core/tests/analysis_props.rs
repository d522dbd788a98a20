// SPDX-License-Identifier: Apache-2.0

//! Selection, statistics and report contracts.

mod common;

use std::collections::BTreeMap;

use common::selection::{oracle_top_k, paired, random_ledger, t_tail_p};
use gslab_core::analysis::{
    build_report, dedup_ledger, format_report, paired_t_test, parse_ledger, select_top_k, two_sided_p, AugRunTable,
    LedgerRow, Strategy, REPORT_HEADER,
};
use gslab_core::combos::BASE_TOKEN;
use gslab_core::rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn by_spec(rows: &[LedgerRow]) -> BTreeMap<String, BTreeMap<u64, f64>> {
    let mut out: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == "baseline") {
        out.entry(r.aug_spec.clone()).or_default().insert(r.seed, r.valid_acc);
    }
    out
}

#[test]
fn selection_matches_brute_force_on_random_ledgers() {
    for case in 0..50u64 {
        let mut r = rng::stream(case, &[7]);
        let specs = r.random_range(3..=12);
        let seeds = r.random_range(2..=5);
        let rows = random_ledger(case, specs, seeds, BASE_TOKEN);
        let table = AugRunTable::from_ledger(&rows, "baseline", "pretrain");
        let expected = by_spec(&rows);
        for strategy in [Strategy::Mean, Strategy::TTest] {
            let k = r.random_range(1..=specs);
            let got: Vec<String> = select_top_k(&table, strategy, k, BASE_TOKEN).unwrap().into_iter().map(|x| x.spec).collect();
            assert_eq!(got, oracle_top_k(&expected, strategy, k, BASE_TOKEN), "case {case} {strategy:?} k={k}");
        }
        assert!(select_top_k(&table, Strategy::Mean, specs + 1, BASE_TOKEN).is_err());
    }
}

#[test]
fn selection_ignores_row_order() {
    for case in 0..20u64 {
        let mut rows = random_ledger(case, 8, 3, BASE_TOKEN);
        let table = AugRunTable::from_ledger(&rows, "baseline", "pretrain");
        rows.shuffle(&mut rng::stream(case, &[8]));
        let shuffled = AugRunTable::from_ledger(&rows, "baseline", "pretrain");
        for strategy in [Strategy::Mean, Strategy::TTest] {
            assert_eq!(
                select_top_k(&table, strategy, 4, BASE_TOKEN).unwrap(),
                select_top_k(&shuffled, strategy, 4, BASE_TOKEN).unwrap()
            );
        }
    }
}

#[test]
fn mean_strategy_example() {
    let mut t = AugRunTable::new();
    for (spec, acc) in [("a", 0.80), ("b", 0.75), ("c", 0.90)] {
        for seed in 0..3 {
            t.insert(spec, seed, acc, acc);
        }
    }
    let got: Vec<String> = select_top_k(&t, Strategy::Mean, 2, "a").unwrap().into_iter().map(|r| r.spec).collect();
    assert_eq!(got, ["c", "a"]);
}

#[test]
fn ttest_rejects_missing_baseline_and_mismatched_seeds() {
    let mut t = AugRunTable::new();
    t.insert("a", 0, 0.5, 0.5);
    t.insert("a", 1, 0.6, 0.6);
    assert!(select_top_k(&t, Strategy::TTest, 1, "zzz").is_err());
    t.insert("b", 0, 0.7, 0.7);
    assert!(select_top_k(&t, Strategy::TTest, 1, "a").is_err());
}

#[test]
fn t_test_closed_form_and_symmetries() {
    let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
    assert!((r.t - 12f64.sqrt()).abs() < 1e-12);
    let closed = 2.0 * (1.0 - (0.5 + r.t / (2.0 * (r.t * r.t + 2.0).sqrt())));
    assert!((r.p - closed).abs() < 1e-12);
    assert!((r.p - 0.0742).abs() < 1e-4);
    let same = paired_t_test(&[0.3, 0.4], &[0.3, 0.4]).unwrap();
    assert_eq!((same.t, same.p), (0.0, 1.0));
    let shift = paired_t_test(&[0.5, 0.6], &[0.4, 0.5]).unwrap();
    assert_eq!(shift.p, 0.0);
    assert!(shift.t.is_infinite() && shift.t > 0.0);
    assert!(paired_t_test(&[0.1], &[0.2]).is_err());
}

proptest! {
    #[test]
    fn t_test_matches_integration_oracle(xs in prop::collection::vec(0.0f64..1.0, 2..8), shift in -0.3f64..0.3, seed in any::<u64>()) {
        let mut r = rng::stream(seed, &[]);
        let ys: Vec<f64> = xs.iter().map(|x| x + shift + r.random_range(-0.1..0.1)).collect();
        let got = paired_t_test(&xs, &ys).unwrap();
        let (t, p) = paired(&xs, &ys);
        prop_assert!((got.t - t).abs() <= 1e-9 * t.abs().max(1.0));
        prop_assert!((got.p - p).abs() < 1e-9);
        let swapped = paired_t_test(&ys, &xs).unwrap();
        prop_assert_eq!(swapped.t, -got.t);
        prop_assert_eq!(swapped.p, got.p);
    }

    #[test]
    fn p_is_monotone_in_abs_t(df in 1usize..30, a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (two_sided_p(lo, df).unwrap(), two_sided_p(hi, df).unwrap());
        prop_assert!(p_hi <= p_lo);
        prop_assert_eq!(two_sided_p(-hi, df).unwrap(), p_hi);
        prop_assert!((p_lo - t_tail_p(lo, df)).abs() < 1e-9);
    }
}

#[test]
fn report_has_table_layout_and_keeps_last_duplicate() {
    let text = "aug_spec,seed,method,stage,train_acc,valid_acc,test_acc,wall_time_s\n\
        randomcrop224,0,baseline,pretrain,0.9,0.8,0.7,1.0\n\
        \"randomcrop224,hflip\",0,baseline,pretrain,0.95,0.85,0.75,1.0\n\
        randomcrop224,1,baseline,pretrain,0.7,0.6,0.5,1.0\n\
        randomcrop224,0,baseline,pretrain,0.5,0.4,0.3,1.0\n\
        randomcrop224,0,simclr,finetune,0.1,0.1,0.1,1.0\n";
    let rows = parse_ledger(text).unwrap();
    assert_eq!(dedup_ledger(&rows).len(), 4);
    let report = build_report(&rows, None, None).unwrap();
    assert_eq!(report.len(), 2);
    assert_eq!(report[0].aug_spec, "randomcrop224");
    assert!((report[0].valid_acc - 0.5).abs() < 1e-12);
    let out = format_report(&report).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), REPORT_HEADER.join(","));
    assert_eq!(lines.next().unwrap(), "1,randomcrop224,60.00,50.00,40.00");
    assert_eq!(lines.next().unwrap(), "2,\"randomcrop224,hflip\",95.00,85.00,75.00");
    assert!(lines.next().is_none());
    assert!(parse_ledger("aug_spec,seed\nx,notanumber\n").is_err());
}
