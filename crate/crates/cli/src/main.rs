// SPDX-License-Identifier: Apache-2.0

//! `gslab`: command-line front end for the augmentation and training engine.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gslab_core::analysis::{self, AugRunTable, EmbeddingTable, Strategy, TsneConfig};
use gslab_core::combos::{enumerate_combinations, format_pool, BASE_TOKEN, PRIMITIVES};
use gslab_core::data::{default_class_names, generate_glyphs, save_image_dir};
use gslab_core::numerics::Checkpoint;
use gslab_core::parallel;
use gslab_core::trainer::{self, ExperimentManifest, RunOutcome, Splits, Stage};

#[derive(Parser, Debug)]
#[command(name = "gslab", version, about = "Augmentation and embedding-loss experiments for letter recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write every base + up-to-N-primitive augmentation spec, one per line.
    EnumerateAugs {
        #[arg(long, default_value = BASE_TOKEN)]
        base: String,
        #[arg(long, default_value_t = 3)]
        max_extra: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic glyph dataset as `<out>/<label>/<id>.png`.
    GenData {
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a manifest (baseline, pretraining or finetuning).
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Results ledger; defaults to `<out-dir>/results.csv`.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Finetune a pretrained checkpoint with a fresh classifier.
    Finetune {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the manifest's checkpoint path.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Train only the classifier.
        #[arg(long)]
        freeze_backbone: bool,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Accuracy of a checkpoint on one split of the manifest's dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
    /// Pick the top-k augmentation specs from a results ledger.
    SelectTop {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Ttest)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = analysis::DEFAULT_TOP_K)]
        k: usize,
        #[arg(long, default_value = BASE_TOKEN)]
        baseline: String,
        #[arg(long, default_value = "baseline")]
        method: String,
        #[arg(long, default_value = "pretrain")]
        stage: String,
    },
    /// Export classifier-input embeddings of a sampled split as CSV.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long, default_value_t = 1000)]
        sample_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact t-SNE of an embedding CSV; writes an SVG and an `id,label,x,y` CSV.
    Tsne {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Layout CSV; defaults to the SVG path with a `.csv` extension.
        #[arg(long)]
        csv_out: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-spec table (`index,aug_spec,train_acc,valid_acc,test_acc`) from a ledger.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        stage: Option<String>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Ttest,
    Mean,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pick_split(splits: Splits, name: SplitName) -> gslab_core::data::Dataset {
    match name {
        SplitName::Train => splits.train,
        SplitName::Valid => splits.valid,
        SplitName::Test => splits.test,
    }
}

fn record(outcome: &RunOutcome, out_dir: &Path, ledger: Option<PathBuf>) -> Result<()> {
    match outcome {
        RunOutcome::Supervised(r) => {
            let ledger = ledger.unwrap_or_else(|| out_dir.join("results.csv"));
            trainer::append_ledger(&ledger, r)?;
            println!(
                "{} seed {}: train {:.4} valid {:.4} test {:.4}",
                r.aug_spec, r.seed, r.train_acc, r.valid_acc, r.test_acc
            );
        }
        RunOutcome::Pretrain(r) => {
            if let Some(last) = r.epochs.last() {
                println!(
                    "{} seed {}: pretrain loss {:.4}, valid {:.4}",
                    r.aug_spec, r.seed, last.train_loss, last.valid_loss
                );
            } else {
                println!("{} seed {}: untrained checkpoint written", r.aug_spec, r.seed);
            }
        }
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::EnumerateAugs { base, max_extra, out } => {
            let specs = enumerate_combinations(&base, &PRIMITIVES, max_extra)?;
            write_output(out.as_deref(), &format_pool(&specs))
        }
        Command::GenData {
            classes,
            per_class,
            side,
            seed,
            out,
        } => {
            let ds = generate_glyphs(classes, per_class, side, seed)?;
            save_image_dir(&ds, &out, &default_class_names(classes))?;
            println!("{} images in {} classes written to {}", ds.len(), classes, out.display());
            Ok(())
        }
        Command::Train { manifest, out_dir, ledger } => {
            let m = ExperimentManifest::load(&manifest)?;
            let outcome = trainer::run_manifest(&m, &out_dir)?;
            record(&outcome, &out_dir, ledger)
        }
        Command::Finetune {
            manifest,
            out_dir,
            checkpoint,
            freeze_backbone,
            ledger,
        } => {
            let mut m = ExperimentManifest::load(&manifest)?;
            if m.stage != Stage::Finetune {
                bail!("manifest stage must be \"finetune\" for the finetune command");
            }
            let ft = m.finetune.as_mut().expect("validated finetune section");
            if let Some(c) = checkpoint {
                ft.checkpoint = c;
            }
            ft.freeze_backbone |= freeze_backbone;
            let outcome = trainer::run_manifest(&m, &out_dir)?;
            record(&outcome, &out_dir, ledger)
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            split,
        } => {
            let m = ExperimentManifest::load(&manifest)?;
            let split = pick_split(Splits::from_manifest(&m)?, split);
            let acc = trainer::evaluate_checkpoint(&checkpoint, &split, &m.geometry, m.batch_size)?;
            println!("{acc:.6}");
            Ok(())
        }
        Command::SelectTop {
            ledger,
            strategy,
            k,
            baseline,
            method,
            stage,
        } => {
            let rows = analysis::read_ledger(&ledger)?;
            let table = AugRunTable::from_ledger(&rows, &method, &stage);
            let strategy = match strategy {
                StrategyArg::Ttest => Strategy::TTest,
                StrategyArg::Mean => Strategy::Mean,
            };
            for r in analysis::select_top_k(&table, strategy, k, &baseline)? {
                println!("{}", r.spec);
            }
            Ok(())
        }
        Command::Embed {
            checkpoint,
            manifest,
            split,
            sample_n,
            seed,
            out,
        } => {
            let m = ExperimentManifest::load(&manifest)?;
            let split = pick_split(Splits::from_manifest(&m)?, split);
            let model = Checkpoint::load(&checkpoint)?.to_model()?;
            let table = analysis::export_embeddings(&model, &split, &m.geometry, sample_n, seed)?;
            write_output(Some(&out), &table.to_csv()?)
        }
        Command::Tsne {
            embeddings,
            out,
            csv_out,
            perplexity,
            iterations,
            seed,
        } => {
            let table = EmbeddingTable::load(&embeddings)?;
            let cfg = TsneConfig {
                perplexity,
                iterations,
                seed,
                ..Default::default()
            };
            let r = analysis::tsne(&table.values, &cfg)?;
            write_output(Some(&out), &analysis::scatter_svg(&table.labels, &r.points, 600.0))?;
            let csv_path = csv_out.unwrap_or_else(|| out.with_extension("csv"));
            write_output(Some(&csv_path), &analysis::layout_csv(&table.ids, &table.labels, &r.points)?)?;
            println!("KL {:.4} -> {:.4}", r.initial_kl(), r.final_kl());
            Ok(())
        }
        Command::Report {
            ledger,
            method,
            stage,
            out,
        } => {
            let rows = analysis::read_ledger(&ledger)?;
            let report = analysis::build_report(&rows, method.as_deref(), stage.as_deref())?;
            write_output(out.as_deref(), &analysis::format_report(&report)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match parallel::with_threads(parallel::threads_from_env(), || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
