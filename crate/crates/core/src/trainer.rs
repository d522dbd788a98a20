// SPDX-License-Identifier: Apache-2.0

//! Supervised, triplet and contrastive training, the pretrain / finetune
//! protocol, evaluation and the results ledger.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{eval_pipeline, images_to_tensor, AugPipeline, Geometry, ImageBuffer};
use crate::combos::{build_pipeline, AugSpec, PipelineTail, BASE_TOKEN};
use crate::data::{self, Dataset, SplitSpec, TripletSampler};
use crate::error::{bail, Error, Result};
use crate::losses::{self, ContrastiveBatchLayout, DEFAULT_MARGIN, DEFAULT_TEMPERATURE};
use crate::numerics::resnet::{ClassifierInput, ClassifierSpec, MlpSpec, OutputGrads, CLASSIFIER_PREFIX};
use crate::numerics::{
    BackwardScope, Checkpoint, LrSchedule, MicroResNet, Mode, ModelConfig, Optimizer, OptimizerKind, Tensor,
};
use crate::rng::{self, tag};

pub const CHECKPOINT_FILE: &str = "checkpoint.gslab";
pub const RESULT_FILE: &str = "result.json";
pub const LEDGER_HEADER: &str = "aug_spec,seed,method,stage,train_acc,valid_acc,test_acc,wall_time_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Triplet,
    Simclr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Triplet => "triplet",
            Method::Simclr => "simclr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Glyphs {
        class_count: usize,
        per_class: usize,
        side: usize,
        seed: u64,
    },
    /// `root/<label>/<image>.png`
    Directory { root: PathBuf },
    /// Annotation CSV; image paths resolve against the CSV's folder.
    Annotations { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub source: DataSource,
    #[serde(default)]
    pub split_seed: u64,
}

impl DatasetConfig {
    pub fn glyphs(class_count: usize, per_class: usize, seed: u64) -> Self {
        DatasetConfig {
            source: DataSource::Glyphs {
                class_count,
                per_class,
                side: 32,
                seed,
            },
            split_seed: 0,
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match &self.source {
            DataSource::Glyphs {
                class_count,
                per_class,
                side,
                seed,
            } => data::generate_glyphs(*class_count, *per_class, *side, *seed),
            DataSource::Directory { root } => Ok(data::load_image_dir(root)?.0),
            DataSource::Annotations { csv } => {
                let records = data::read_annotations(csv)?;
                let mut labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
                labels.sort_unstable();
                labels.dedup();
                let map = labels.iter().enumerate().map(|(i, l)| (l.to_string(), i)).collect();
                let base = csv.parent().unwrap_or(Path::new("."));
                data::crop_from_annotations(&records, base, &map)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_proj_dim")]
    pub proj_dim: usize,
    #[serde(default = "default_proj_hidden")]
    pub proj_hidden: usize,
}

fn default_widths() -> Vec<usize> {
    ModelConfig::default().widths
}
fn default_embed_dim() -> usize {
    64
}
fn default_proj_dim() -> usize {
    128
}
fn default_proj_hidden() -> usize {
    64
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            widths: default_widths(),
            embed_dim: default_embed_dim(),
            proj_dim: default_proj_dim(),
            proj_hidden: default_proj_hidden(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneAugmentation {
    #[default]
    SameAsPretrain,
    Base,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub freeze_backbone: bool,
    #[serde(default)]
    pub augmentation: FinetuneAugmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub method: Method,
    pub stage: Stage,
    pub dataset: DatasetConfig,
    pub aug_spec: String,
    pub seed: u64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub schedule: Option<LrSchedule>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub finetune: Option<FinetuneConfig>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_batch() -> usize {
    32
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

impl ExperimentManifest {
    /// Desk-scale manifest with default hyperparameters.
    pub fn new(method: Method, stage: Stage, dataset: DatasetConfig, aug_spec: &str, seed: u64, epochs: usize) -> Self {
        ExperimentManifest {
            method,
            stage,
            dataset,
            aug_spec: aug_spec.to_string(),
            seed,
            epochs,
            batch_size: default_batch(),
            optimizer: None,
            schedule: None,
            model: ModelSection::default(),
            geometry: Geometry::desk(),
            finetune: None,
            margin: DEFAULT_MARGIN,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn spec(&self) -> Result<AugSpec> {
        self.aug_spec
            .parse()
            .map_err(|e: Error| Error::Config(format!("aug_spec {:?}: {e}", self.aug_spec)))
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        self.geometry.validate()?;
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be >= 1");
        }
        match (self.method, self.stage) {
            (Method::Baseline, Stage::Finetune) => bail!(Config, "baseline has no finetune stage"),
            (Method::Simclr, Stage::Pretrain) if self.batch_size < 4 => {
                bail!(Config, "simclr batch_size {} < 4 leaves too few negatives", self.batch_size)
            }
            (_, Stage::Finetune) if self.finetune.is_none() => {
                bail!(Config, "finetune stage requires a finetune.checkpoint")
            }
            _ => {}
        }
        if let Some(o) = &self.optimizer {
            if !(o.lr > 0.0) {
                bail!(Config, "learning rate must be > 0");
            }
        }
        Ok(())
    }

    /// Adam 3e-4 for contrastive pretraining, Adam 1e-3 otherwise.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        self.optimizer.unwrap_or(OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: if self.method == Method::Simclr && self.stage == Stage::Pretrain {
                3e-4
            } else {
                1e-3
            },
        })
    }

    /// Cosine annealing for contrastive pretraining, step decay (x0.1 at half
    /// the epochs) otherwise.
    pub fn schedule(&self) -> LrSchedule {
        self.schedule.unwrap_or(if self.method == Method::Simclr && self.stage == Stage::Pretrain {
            LrSchedule::CosineAnnealing {
                t_max: self.epochs.max(1),
                eta_min: 0.0,
            }
        } else {
            LrSchedule::StepDecay {
                gamma: 0.1,
                step_epochs: (self.epochs / 2).max(1),
            }
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            in_channels: 3,
            widths: self.model.widths.clone(),
            input_side: self.geometry.crop_side,
        }
    }

    pub fn pipeline_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[tag::AUGMENT])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub aug_spec: String,
    pub seed: u64,
    pub method: Method,
    pub stage: Stage,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights produced the final numbers; `None` when untrained.
    pub best_epoch: Option<usize>,
    pub train_acc: f64,
    pub valid_acc: f64,
    pub test_acc: f64,
    pub wall_time_s: f64,
}

impl RunResult {
    pub fn ledger_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.3}",
            csv_field(&self.aug_spec),
            self.seed,
            self.method.as_str(),
            self.stage.as_str(),
            self.train_acc,
            self.valid_acc,
            self.test_acc,
            self.wall_time_s
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Triplet only: fraction of triplets with a positive hinge.
    pub active_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainResult {
    pub aug_spec: String,
    pub seed: u64,
    pub method: Method,
    pub epochs: Vec<PretrainEpoch>,
    pub wall_time_s: f64,
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Appends one row, writing the header first when the file is new or empty.
pub fn append_ledger(path: &Path, result: &RunResult) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(LEDGER_HEADER);
        text.push('\n');
    }
    text.push_str(&result.ledger_row());
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- splits and eval

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn from_manifest(m: &ExperimentManifest) -> Result<Self> {
        let ds = m.dataset.load()?;
        let (train, valid, test) = data::split(&ds, &SplitSpec::standard(m.dataset.split_seed))?;
        Ok(Splits { train, valid, test })
    }
}

/// A split run through the deterministic eval pipeline once.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl EvalSet {
    pub fn new(split: &Dataset, geom: &Geometry, side: usize) -> Result<Self> {
        let p = eval_pipeline(geom, side)?;
        let images = augment_all(&p, split.items.iter().map(|it| (&it.image, vec![0u64])).collect())?;
        let inputs = if images.is_empty() {
            Tensor::zeros(&[0, 3, side, side])
        } else {
            images_to_tensor(&images)?
        };
        Ok(EvalSet {
            inputs,
            labels: split.labels(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn chunk(&self, rows: &[usize]) -> Result<Tensor> {
        let per = self.inputs.len() / self.len().max(1);
        let mut data = Vec::with_capacity(rows.len() * per);
        for &r in rows {
            data.extend_from_slice(&self.inputs.data()[r * per..(r + 1) * per]);
        }
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = rows.len();
        Tensor::from_vec(&shape, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross entropy and argmax accuracy in eval mode.
pub fn evaluate_set(model: &MicroResNet, set: &EvalSet, batch: usize) -> Result<EvalOutcome> {
    if set.is_empty() {
        bail!(Argument, "cannot evaluate on an empty split");
    }
    let batch = batch.max(1);
    let mut loss = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..set.len()).collect();
    for rows in idx.chunks(batch) {
        let x = set.chunk(rows)?;
        let out = model.infer(&x)?;
        let Some(logits) = out.logits else {
            bail!(State, "model has no classifier to evaluate");
        };
        let labels: Vec<usize> = rows.iter().map(|&r| set.labels[r]).collect();
        loss += losses::cross_entropy(&logits, &labels)?.value * rows.len() as f64;
        correct += logits.argmax_rows().iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(EvalOutcome {
        loss: loss / set.len() as f64,
        accuracy: correct as f64 / set.len() as f64,
    })
}

/// Accuracy of `model` on `split` under the eval pipeline.
pub fn evaluate(model: &MicroResNet, split: &Dataset, geom: &Geometry, batch: usize) -> Result<f64> {
    if split.is_empty() {
        bail!(Argument, "cannot evaluate on an empty split");
    }
    let set = EvalSet::new(split, geom, geom.crop_side)?;
    Ok(evaluate_set(model, &set, batch)?.accuracy)
}

/// Loads a checkpoint and evaluates it.
pub fn evaluate_checkpoint(path: &Path, split: &Dataset, geom: &Geometry, batch: usize) -> Result<f64> {
    let model = Checkpoint::load(path)?.to_model()?;
    evaluate(&model, split, geom, batch)
}

/// Applies `p` to each image on its own keyed stream, in parallel; output order follows input order.
fn augment_all(p: &AugPipeline, jobs: Vec<(&ImageBuffer, Vec<u64>)>) -> Result<Vec<ImageBuffer>> {
    jobs.into_par_iter()
        .map(|(img, coords)| p.apply_stream(img, &coords))
        .collect()
}

// ---------------------------------------------------------------- supervised loop

fn shuffled(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[tag::SHUFFLE, epoch as u64]));
    idx
}

fn check_lr(lr: f64, epoch: usize) -> Result<()> {
    if !(lr > 0.0) {
        bail!(Config, "learning rate at epoch {epoch} is {lr}; schedules must stay positive");
    }
    Ok(())
}

struct Supervised<'a> {
    manifest: &'a ExperimentManifest,
    pipeline: AugPipeline,
    /// Only parameters under this prefix are updated, and the backbone runs in eval mode.
    frozen: bool,
}

/// Trains the attached classifier with cross entropy; returns the result and
/// the model restored to its best-validation epoch.
fn supervised_loop(sup: Supervised<'_>, mut model: MicroResNet, splits: &Splits, started: Instant) -> Result<(RunResult, MicroResNet)> {
    let m = sup.manifest;
    let side = m.geometry.crop_side;
    let valid = EvalSet::new(&splits.valid, &m.geometry, side)?;
    let test = EvalSet::new(&splits.test, &m.geometry, side)?;
    if valid.is_empty() || test.is_empty() {
        bail!(Argument, "validation and test splits must be non-empty");
    }
    let oc = m.optimizer_config();
    let schedule = m.schedule();
    let mut opt = Optimizer::new(oc.kind, oc.lr);
    let filter = |name: &str| !sup.frozen || name.starts_with(CLASSIFIER_PREFIX);
    let (mode, scope) = if sup.frozen {
        (Mode::Eval, BackwardScope::HeadsOnly)
    } else {
        (Mode::Train, BackwardScope::Full)
    };

    let mut epochs = Vec::with_capacity(m.epochs);
    let mut best: Option<(usize, f64, f64, Checkpoint)> = None;
    let n = splits.train.len();
    if n == 0 {
        bail!(Argument, "training split is empty");
    }
    for epoch in 0..m.epochs {
        let lr = schedule.lr_at(epoch, oc.lr)?;
        check_lr(lr, epoch)?;
        opt.set_lr(lr);
        let order = shuffled(n, m.seed, epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for rows in order.chunks(m.batch_size) {
            let jobs = rows
                .iter()
                .map(|&i| (&splits.train.items[i].image, vec![tag::AUGMENT, i as u64, epoch as u64]))
                .collect();
            let x = images_to_tensor(&augment_all(&sup.pipeline, jobs)?)?;
            let labels: Vec<usize> = rows.iter().map(|&i| splits.train.items[i].label).collect();
            let out = model.forward(&x, mode)?;
            let logits = out.logits.expect("classifier attached");
            let ce = losses::cross_entropy(&logits, &labels)?;
            loss_sum += ce.value * rows.len() as f64;
            correct += logits.argmax_rows().iter().zip(&labels).filter(|(p, l)| p == l).count();
            model.backward(
                &OutputGrads {
                    logits: Some(ce.grad),
                    ..Default::default()
                },
                scope,
            )?;
            opt.step(model.store_mut(), filter)?;
        }
        let v = evaluate_set(&model, &valid, m.batch_size)?;
        let stats = EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            valid_loss: v.loss,
            valid_acc: v.accuracy,
        };
        epochs.push(stats);
        // strict improvement keeps the earlier epoch on ties
        if best.as_ref().is_none_or(|b| v.accuracy > b.1) {
            best = Some((epoch, v.accuracy, stats.train_acc, Checkpoint::from_model(&model)));
        }
    }

    let (best_epoch, valid_acc, train_acc) = match best {
        Some((e, va, ta, ck)) => {
            model = ck.to_model()?;
            (Some(e), va, ta)
        }
        None => {
            let train = EvalSet::new(&splits.train, &m.geometry, side)?;
            (
                None,
                evaluate_set(&model, &valid, m.batch_size)?.accuracy,
                evaluate_set(&model, &train, m.batch_size)?.accuracy,
            )
        }
    };
    let test_acc = evaluate_set(&model, &test, m.batch_size)?.accuracy;
    Ok((
        RunResult {
            aug_spec: m.aug_spec.clone(),
            seed: m.seed,
            method: m.method,
            stage: m.stage,
            epochs,
            best_epoch,
            train_acc,
            valid_acc,
            test_acc,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        model,
    ))
}

fn save_checkpoint(model: &MicroResNet, out_dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Checkpoint::from_model(model).save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(())
}

/// End-to-end cross-entropy training of backbone and classifier.
pub fn train_baseline(m: &ExperimentManifest, splits: &Splits, out_dir: Option<&Path>) -> Result<(RunResult, MicroResNet)> {
    let started = Instant::now();
    m.validate()?;
    if m.method != Method::Baseline {
        bail!(Config, "train_baseline called with method {}", m.method.as_str());
    }
    let pipeline = build_pipeline(&m.spec()?, &m.geometry, PipelineTail::Supervised, m.pipeline_seed())?;
    let mut model = MicroResNet::new(m.model_config(), &mut rng::stream(m.seed, &[tag::INIT]))?;
    model.attach_classifier(
        ClassifierSpec {
            classes: splits.train.class_count,
            input: ClassifierInput::Features,
        },
        &mut rng::stream(m.seed, &[tag::HEAD]),
    )?;
    let (result, model) = supervised_loop(
        Supervised {
            manifest: m,
            pipeline,
            frozen: false,
        },
        model,
        splits,
        started,
    )?;
    save_checkpoint(&model, out_dir)?;
    Ok((result, model))
}

// ---------------------------------------------------------------- pretraining

/// Fixed validation triplets and view pairs, built once per run.
fn triplet_batches(ds: &Dataset, m: &ExperimentManifest, p: &AugPipeline, epoch: usize, steps: usize) -> Result<Vec<(Tensor, usize)>> {
    let sampler = TripletSampler::new(ds)?;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let b = sampler.sample(m.batch_size, &mut rng::stream(m.seed, &[tag::TRIPLET, epoch as u64, step as u64]));
        let jobs = b
            .blocks()
            .into_iter()
            .enumerate()
            .map(|(slot, i)| (&ds.items[i].image, vec![tag::TRIPLET, epoch as u64, step as u64, slot as u64]))
            .collect();
        out.push((images_to_tensor(&augment_all(p, jobs)?)?, b.len()));
    }
    Ok(out)
}

struct TripletStep {
    loss: f64,
    active: f64,
    grad: Tensor,
}

fn triplet_step(emb: &Tensor, n: usize, margin: f64) -> Result<TripletStep> {
    let a = emb.select_rows(&(0..n).collect::<Vec<_>>());
    let p = emb.select_rows(&(n..2 * n).collect::<Vec<_>>());
    let q = emb.select_rows(&(2 * n..3 * n).collect::<Vec<_>>());
    let t = losses::triplet_loss(&a, &p, &q, margin)?;
    Ok(TripletStep {
        loss: t.value,
        active: t.active_fraction,
        grad: Tensor::concat_rows(&[&t.grad_anchor, &t.grad_positive, &t.grad_negative])?,
    })
}

fn contrastive_sources(n: usize, batch: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<Vec<usize>> {
    let order = if shuffle { shuffled(n, seed, epoch) } else { (0..n).collect() };
    // a trailing chunk with a single source has no negatives and is dropped
    order.chunks(batch).filter(|c| c.len() >= 2).map(|c| c.to_vec()).collect()
}

/// Triplet or contrastive pretraining of backbone plus projection head.
/// The checkpoint is rewritten after every epoch.
pub fn pretrain_embedding(m: &ExperimentManifest, splits: &Splits, out_dir: Option<&Path>) -> Result<(PretrainResult, MicroResNet)> {
    let started = Instant::now();
    m.validate()?;
    if m.stage != Stage::Pretrain || m.method == Method::Baseline {
        bail!(Config, "pretrain_embedding needs a triplet or simclr pretrain manifest");
    }
    let spec = m.spec()?;
    let mut model = MicroResNet::new(m.model_config(), &mut rng::stream(m.seed, &[tag::INIT]))?;
    let head_rng = &mut rng::stream(m.seed, &[tag::HEAD]);
    let oc = m.optimizer_config();
    let schedule = m.schedule();
    let mut opt = Optimizer::new(oc.kind, oc.lr);
    let mut epochs = Vec::with_capacity(m.epochs);

    match m.method {
        Method::Triplet => {
            model.attach_triplet_head(m.model.embed_dim, head_rng)?;
            let p = build_pipeline(&spec, &m.geometry, PipelineTail::Supervised, m.pipeline_seed())?;
            let eval_p = eval_pipeline(&m.geometry, m.geometry.crop_side)?;
            let steps = splits.train.len().div_ceil(m.batch_size);
            let valid_steps = splits.valid.len().div_ceil(m.batch_size).max(1);
            let valid = triplet_batches(&splits.valid, m, &eval_p, usize::MAX, valid_steps)?;
            for epoch in 0..m.epochs {
                let lr = schedule.lr_at(epoch, oc.lr)?;
                check_lr(lr, epoch)?;
                opt.set_lr(lr);
                let (mut loss, mut active) = (0.0, 0.0);
                for (x, n) in triplet_batches(&splits.train, m, &p, epoch, steps)? {
                    let out = model.forward(&x, Mode::Train)?;
                    let s = triplet_step(out.embedding.as_ref().expect("head attached"), n, m.margin)?;
                    loss += s.loss;
                    active += s.active;
                    model.backward(
                        &OutputGrads {
                            embedding: Some(s.grad),
                            ..Default::default()
                        },
                        BackwardScope::Full,
                    )?;
                    opt.step(model.store_mut(), |_| true)?;
                }
                let mut vloss = 0.0;
                for (x, n) in &valid {
                    let emb = model.infer(x)?.embedding.expect("head attached");
                    vloss += triplet_step(&emb, *n, m.margin)?.loss;
                }
                epochs.push(PretrainEpoch {
                    epoch,
                    lr,
                    train_loss: loss / steps as f64,
                    valid_loss: vloss / valid.len() as f64,
                    active_fraction: Some(active / steps as f64),
                });
                save_checkpoint(&model, out_dir)?;
            }
        }
        Method::Simclr => {
            model.attach_simclr_head(
                MlpSpec {
                    hidden: m.model.proj_hidden,
                    out: m.model.proj_dim,
                },
                head_rng,
            )?;
            let p = build_pipeline(&spec, &m.geometry, PipelineTail::Contrastive, m.pipeline_seed())?;
            // labels never leave the dataset: only image pools reach the batch builder
            let train_pool = splits.train.images_only();
            let valid_pool = splits.valid.images_only();
            let valid_chunks = contrastive_sources(valid_pool.len(), m.batch_size, m.seed, 0, false);
            if valid_chunks.is_empty() {
                bail!(Argument, "validation split too small for a contrastive batch");
            }
            let mut valid = Vec::with_capacity(valid_chunks.len());
            for c in &valid_chunks {
                let v = data::make_contrastive_batch(&valid_pool, c, &p, u64::MAX)?;
                valid.push(images_to_tensor(&v.views)?);
            }
            for epoch in 0..m.epochs {
                let lr = schedule.lr_at(epoch, oc.lr)?;
                check_lr(lr, epoch)?;
                opt.set_lr(lr);
                let chunks = contrastive_sources(train_pool.len(), m.batch_size, m.seed, epoch, true);
                let mut loss = 0.0;
                for c in &chunks {
                    let v = data::make_contrastive_batch(&train_pool, c, &p, epoch as u64)?;
                    let x = images_to_tensor(&v.views)?;
                    let out = model.forward(&x, Mode::Train)?;
                    let layout = ContrastiveBatchLayout::interleaved(out.embedding.expect("head attached"))?;
                    let l = losses::info_nce(&layout, m.temperature)?;
                    loss += l.value;
                    model.backward(
                        &OutputGrads {
                            embedding: Some(l.grad),
                            ..Default::default()
                        },
                        BackwardScope::Full,
                    )?;
                    opt.step(model.store_mut(), |_| true)?;
                }
                epochs.push(PretrainEpoch {
                    epoch,
                    lr,
                    train_loss: loss / chunks.len().max(1) as f64,
                    valid_loss: contrastive_valid_loss(&model, &valid, m.temperature)?,
                    active_fraction: None,
                });
                save_checkpoint(&model, out_dir)?;
            }
        }
        Method::Baseline => unreachable!("rejected above"),
    }
    if m.epochs == 0 {
        save_checkpoint(&model, out_dir)?;
    }
    Ok((
        PretrainResult {
            aug_spec: m.aug_spec.clone(),
            seed: m.seed,
            method: m.method,
            epochs,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        model,
    ))
}

/// Mean eval-mode InfoNCE over fixed validation view batches.
pub fn contrastive_valid_loss(model: &MicroResNet, batches: &[Tensor], temperature: f64) -> Result<f64> {
    let mut total = 0.0;
    for x in batches {
        let emb = model.infer(x)?.embedding.ok_or_else(|| Error::State("model has no projection head".into()))?;
        total += losses::info_nce(&ContrastiveBatchLayout::interleaved(emb)?, temperature)?.value;
    }
    Ok(total / batches.len().max(1) as f64)
}

// ---------------------------------------------------------------- finetuning

/// Prepares a pretrained model for classification: triplet models keep their
/// head and classify its output; contrastive models drop the projection head
/// and classify backbone features. Any previous classifier is replaced.
pub fn attach_finetune_classifier(model: &mut MicroResNet, method: Method, classes: usize, seed: u64) -> Result<()> {
    model.detach_classifier();
    let input = match method {
        Method::Triplet => {
            if model.architecture().triplet_head.is_none() {
                bail!(Load, "checkpoint has no triplet head to finetune on");
            }
            ClassifierInput::Embedding
        }
        Method::Simclr => {
            model.detach_simclr_head()?;
            model.detach_triplet_head()?;
            ClassifierInput::Features
        }
        Method::Baseline => ClassifierInput::Features,
    };
    model.attach_classifier(ClassifierSpec { classes, input }, &mut rng::stream(seed, &[tag::HEAD, 1]))
}

/// Fresh classifier on a pretrained checkpoint, trained with cross entropy.
pub fn finetune(m: &ExperimentManifest, splits: &Splits, out_dir: Option<&Path>) -> Result<(RunResult, MicroResNet)> {
    let started = Instant::now();
    m.validate()?;
    let Some(ft) = &m.finetune else {
        bail!(Config, "finetune stage requires a finetune.checkpoint");
    };
    if m.stage != Stage::Finetune {
        bail!(Config, "finetune called with a pretrain manifest");
    }
    let ck = Checkpoint::load(&ft.checkpoint)?;
    if ck.architecture.config.widths != m.model.widths {
        bail!(
            Load,
            "checkpoint widths {:?} do not match manifest widths {:?}",
            ck.architecture.config.widths,
            m.model.widths
        );
    }
    let model = ck.to_model()?;
    finetune_model(m, model, splits, out_dir, started)
}

/// Finetunes an in-memory model; see [`finetune`].
pub fn finetune_model(
    m: &ExperimentManifest,
    mut model: MicroResNet,
    splits: &Splits,
    out_dir: Option<&Path>,
    started: Instant,
) -> Result<(RunResult, MicroResNet)> {
    let ft = m.finetune.clone().unwrap_or(FinetuneConfig {
        checkpoint: PathBuf::new(),
        freeze_backbone: false,
        augmentation: FinetuneAugmentation::SameAsPretrain,
    });
    attach_finetune_classifier(&mut model, m.method, splits.train.class_count, m.seed)?;
    let spec = match ft.augmentation {
        FinetuneAugmentation::SameAsPretrain => m.spec()?,
        FinetuneAugmentation::Base => BASE_TOKEN.parse()?,
    };
    let pipeline = build_pipeline(&spec, &m.geometry, PipelineTail::Supervised, m.pipeline_seed())?;
    let (result, trained) = supervised_loop(
        Supervised {
            manifest: m,
            pipeline,
            frozen: ft.freeze_backbone,
        },
        model,
        splits,
        started,
    )?;
    save_checkpoint(&trained, out_dir)?;
    Ok((result, trained))
}

/// Outcome of [`run_manifest`].
#[derive(Debug, Clone)]
pub enum RunOutcome {
    Supervised(RunResult),
    Pretrain(PretrainResult),
}

/// Runs whatever the manifest describes, writing the checkpoint and a JSON
/// result into `out_dir`.
pub fn run_manifest(m: &ExperimentManifest, out_dir: &Path) -> Result<RunOutcome> {
    m.validate()?;
    let splits = Splits::from_manifest(m)?;
    let outcome = match (m.method, m.stage) {
        (Method::Baseline, _) => RunOutcome::Supervised(train_baseline(m, &splits, Some(out_dir))?.0),
        (_, Stage::Pretrain) => RunOutcome::Pretrain(pretrain_embedding(m, &splits, Some(out_dir))?.0),
        (_, Stage::Finetune) => RunOutcome::Supervised(finetune(m, &splits, Some(out_dir))?.0),
    };
    let json = match &outcome {
        RunOutcome::Supervised(r) => serde_json::to_string_pretty(r)?,
        RunOutcome::Pretrain(r) => serde_json::to_string_pretty(r)?,
    };
    let path = out_dir.join(RESULT_FILE);
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(outcome)
}
