// SPDX-License-Identifier: Apache-2.0

//! Exit codes and artifacts of the `gslab` binary.

use std::path::Path;
use std::process::{Command, Output};

use gslab_core::augment::Geometry;
use gslab_core::combos::{BASE_TOKEN, SIMCLR_BASE_TOKEN};
use gslab_core::trainer::{DatasetConfig, DataSource, ExperimentManifest, FinetuneConfig, Method, Stage};

fn gslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gslab")).args(args).output().expect("spawn gslab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_manifest(method: Method, stage: Stage, epochs: usize) -> ExperimentManifest {
    let mut m = ExperimentManifest::new(method, stage, DatasetConfig::glyphs(3, 12, 2), BASE_TOKEN, 1, epochs);
    m.batch_size = 8;
    m.model.widths = vec![4, 8];
    m.model.embed_dim = 8;
    m.model.proj_hidden = 8;
    m.model.proj_dim = 8;
    m.geometry = Geometry {
        resize_side: 20,
        crop_side: 16,
        simclr_side: 16,
        simclr_min_area: 0.6,
    };
    m
}

fn write_manifest(dir: &Path, name: &str, m: &ExperimentManifest) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, m.to_json()).unwrap();
    path
}

#[test]
fn enumerate_augs_writes_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("combos.txt");
    let o = gslab(&["enumerate-augs", "--base", BASE_TOKEN, "--max-extra", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 93);
    let fixture = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/combos_93.txt")).unwrap();
    assert_eq!(text, fixture);
    let o = gslab(&["enumerate-augs"]);
    assert_eq!(stdout(&o), fixture);
}

#[test]
fn usage_errors_exit_one() {
    let o = gslab(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    let o = gslab(&["train", "--out-dir", "x"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--manifest"), "{}", stderr(&o));
    let o = gslab(&["enumerate-augs", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&gslab(&["--help"])), 0);
    assert_eq!(code(&gslab(&["--version"])), 0);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gslab(&["train", "--manifest", p(&dir.path().join("absent.json")), "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error:"));

    let mut bad = tiny_manifest(Method::Baseline, Stage::Pretrain, 0);
    bad.aug_spec = "randomcrop224,notanop".into();
    let path = write_manifest(dir.path(), "bad.json", &bad);
    let o = gslab(&["train", "--manifest", p(&path), "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("notanop"), "{}", stderr(&o));
}

#[test]
fn zero_epoch_train_writes_artifacts_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "m.json", &tiny_manifest(Method::Baseline, Stage::Pretrain, 0));
    let mut seen = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = gslab(&["train", "--manifest", p(&m), "--out-dir", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let ledger = std::fs::read_to_string(out.join("results.csv")).unwrap();
        let lines: Vec<&str> = ledger.lines().collect();
        assert_eq!(lines[0], gslab_core::trainer::LEDGER_HEADER);
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("randomcrop224,1,baseline,pretrain,"));
        let row_without_time = lines[1].rsplit_once(',').unwrap().0.to_string();
        seen.push((std::fs::read(out.join("checkpoint.gslab")).unwrap(), row_without_time));
        assert!(out.join("result.json").exists());
    }
    assert_eq!(seen[0], seen[1]);

    let ck = dir.path().join("a/checkpoint.gslab");
    let o = gslab(&["evaluate", "--checkpoint", p(&ck), "--manifest", p(&m), "--split", "valid"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let acc: f64 = stdout(&o).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn gen_data_feeds_a_directory_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("glyphs");
    let o = gslab(&["gen-data", "--classes", "3", "--per-class", "5", "--side", "24", "--seed", "4", "--out", p(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for c in ["c00", "c01", "c02"] {
        assert_eq!(std::fs::read_dir(data.join(c)).unwrap().count(), 5);
    }
    let mut m = tiny_manifest(Method::Baseline, Stage::Pretrain, 1);
    m.dataset = DatasetConfig {
        source: DataSource::Directory { root: data.clone() },
        split_seed: 0,
    };
    let path = write_manifest(dir.path(), "dir.json", &m);
    let o = gslab(&["train", "--manifest", p(&path), "--out-dir", p(&dir.path().join("run"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn pretrain_finetune_embed_and_tsne() {
    let dir = tempfile::tempdir().unwrap();
    let mut pre = tiny_manifest(Method::Simclr, Stage::Pretrain, 1);
    pre.aug_spec = SIMCLR_BASE_TOKEN.into();
    let pre_path = write_manifest(dir.path(), "pre.json", &pre);
    let pre_out = dir.path().join("pre");
    let o = gslab(&["train", "--manifest", p(&pre_path), "--out-dir", p(&pre_out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!pre_out.join("results.csv").exists());

    let mut ft = pre.clone();
    ft.stage = Stage::Finetune;
    ft.finetune = Some(FinetuneConfig {
        checkpoint: dir.path().join("nowhere"),
        freeze_backbone: false,
        augmentation: Default::default(),
    });
    let ft_path = write_manifest(dir.path(), "ft.json", &ft);
    let ledger = dir.path().join("ledger.csv");
    let ck = pre_out.join("checkpoint.gslab");
    let o = gslab(&[
        "finetune", "--manifest", p(&ft_path), "--out-dir", p(&dir.path().join("ft")), "--checkpoint", p(&ck),
        "--freeze-backbone", "--ledger", p(&ledger),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = std::fs::read_to_string(&ledger).unwrap();
    assert!(rows.lines().nth(1).unwrap().starts_with("randomcrop198,1,simclr,finetune,"));

    let emb = dir.path().join("emb.csv");
    let ft_ck = dir.path().join("ft/checkpoint.gslab");
    let o = gslab(&[
        "embed", "--checkpoint", p(&ft_ck), "--manifest", p(&ft_path), "--split", "train", "--sample-n", "20", "--out", p(&emb),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&emb).unwrap().lines().count(), 21);

    let svg = dir.path().join("plot.svg");
    let o = gslab(&["tsne", "--embeddings", p(&emb), "--out", p(&svg), "--perplexity", "5", "--iterations", "300"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
    let layout = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert_eq!(layout.lines().next().unwrap(), "id,label,x,y");
    assert_eq!(layout.lines().count(), 21);

    let o = gslab(&["tsne", "--embeddings", p(&emb), "--out", p(&svg), "--perplexity", "30"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn select_top_and_report_from_a_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("results.csv");
    let mut text = String::from("aug_spec,seed,method,stage,train_acc,valid_acc,test_acc,wall_time_s\n");
    let specs = [
        ("randomcrop224", [0.80, 0.81, 0.79]),
        ("\"randomcrop224,hflip\"", [0.86, 0.88, 0.87]),
        ("\"randomcrop224,gray\"", [0.82, 0.80, 0.83]),
        ("\"randomcrop224,invert\"", [0.70, 0.72, 0.71]),
    ];
    for (spec, accs) in specs {
        for (seed, a) in accs.iter().enumerate() {
            text.push_str(&format!("{spec},{seed},baseline,pretrain,0.99,{a},{a},1.0\n"));
        }
    }
    std::fs::write(&ledger, text).unwrap();

    let o = gslab(&["select-top", "--ledger", p(&ledger), "--strategy", "ttest", "--k", "2", "--baseline", BASE_TOKEN]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "randomcrop224,hflip\nrandomcrop224,gray\n");
    let o = gslab(&["select-top", "--ledger", p(&ledger), "--strategy", "mean", "--k", "3"]);
    assert_eq!(stdout(&o), "randomcrop224,hflip\nrandomcrop224,gray\nrandomcrop224\n");
    let o = gslab(&["select-top", "--ledger", p(&ledger), "--k", "9"]);
    assert_eq!(code(&o), 2);

    let o = gslab(&["report", "--ledger", p(&ledger)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = stdout(&o);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "index,aug_spec,train_acc,valid_acc,test_acc");
    assert_eq!(lines[1], "1,randomcrop224,99.00,80.00,80.00");
    assert_eq!(lines[2], "2,\"randomcrop224,hflip\",99.00,87.00,87.00");
    assert_eq!(lines.len(), 5);
}
