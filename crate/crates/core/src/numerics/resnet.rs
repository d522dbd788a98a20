// SPDX-License-Identifier: Apache-2.0

//! MicroResNet: a 3×3 stem followed by residual stages of two basic blocks,
//! global average pooling, and optional projection / classification heads.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::layers::{
    batchnorm2d_backward, batchnorm2d_forward, conv2d_backward, conv2d_forward,
    global_avg_pool_backward, global_avg_pool_forward, linear_backward, linear_forward,
    relu_backward, relu_forward, BatchNormCache, ConvGeometry, Mode, RunningStats,
};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{bail, Result};

pub const BACKBONE_PREFIX: &str = "backbone.";
pub const TRIPLET_HEAD_PREFIX: &str = "triplet_head.";
pub const SIMCLR_HEAD_PREFIX: &str = "simclr_head.";
pub const CLASSIFIER_PREFIX: &str = "classifier.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub widths: Vec<usize>,
    pub input_side: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            widths: vec![8, 16, 32],
            input_side: 32,
        }
    }
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("at least one stage")
    }

    /// Product of the stage strides; every stage after the first halves the side.
    pub fn total_stride(&self) -> usize {
        1 << self.widths.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) || self.in_channels == 0 {
            bail!(Config, "model needs at least one stage and non-zero widths");
        }
        check_side(self.input_side, self.total_stride())
    }
}

fn check_side(side: usize, stride: usize) -> Result<()> {
    if side < 8 || side % stride != 0 {
        bail!(Dimension, "input side {side} must be >= 8 and divisible by total stride {stride}");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierInput {
    /// Pooled backbone features.
    Features,
    /// Output of the attached projection head.
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub classes: usize,
    pub input: ClassifierInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub hidden: usize,
    pub out: usize,
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub config: ModelConfig,
    pub triplet_head: Option<usize>,
    pub simclr_head: Option<MlpSpec>,
    pub classifier: Option<ClassifierSpec>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub features: Tensor,
    pub embedding: Option<Tensor>,
    pub logits: Option<Tensor>,
}

/// Upstream gradients for any subset of the model outputs.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub features: Option<Tensor>,
    pub embedding: Option<Tensor>,
    pub logits: Option<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardScope {
    Full,
    /// Stop at the pooled features; backbone gradients stay zero.
    HeadsOnly,
}

fn remap_id(id: &mut ParamId, map: &[Option<usize>]) {
    id.0 = map[id.0].expect("remapped parameter was removed");
}

#[derive(Debug, Clone)]
struct ConvBn {
    weight: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
    geom: ConvGeometry,
}

struct ConvBnTape {
    bn: BatchNormCache,
}

type StatUpdate = (ParamId, Tensor);

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (cin * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
        let w: Vec<f64> = (0..cout * cin * k * k).map(|_| normal.sample(rng)).collect();
        let weight = store.add(
            format!("{name}.conv.weight"),
            Tensor::from_vec(&[cout, cin, k, k], w).expect("shape"),
            true,
        );
        let bias = store.add(format!("{name}.conv.bias"), Tensor::zeros(&[cout]), true);
        let gamma = store.add(format!("{name}.bn.gamma"), Tensor::full(&[cout], 1.0), true);
        let beta = store.add(format!("{name}.bn.beta"), Tensor::zeros(&[cout]), true);
        let running_mean = store.add(format!("{name}.bn.running_mean"), Tensor::zeros(&[cout]), false);
        let running_var = store.add(format!("{name}.bn.running_var"), Tensor::full(&[cout], 1.0), false);
        ConvBn {
            weight,
            bias,
            gamma,
            beta,
            running_mean,
            running_var,
            geom: ConvGeometry { stride, pad: k / 2 },
        }
    }

    fn ids_mut(&mut self) -> [&mut ParamId; 6] {
        [
            &mut self.weight,
            &mut self.bias,
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        mode: Mode,
        updates: &mut Vec<StatUpdate>,
    ) -> Result<(Tensor, ConvBnTape)> {
        let z = conv2d_forward(x, store.value(self.weight), store.value(self.bias), self.geom)?;
        let mut stats = RunningStats {
            mean: store.value(self.running_mean).data().to_vec(),
            var: store.value(self.running_var).data().to_vec(),
        };
        let (y, bn) = match mode {
            Mode::Train => {
                let out = batchnorm2d_forward(&z, store.value(self.gamma), store.value(self.beta), Some(&mut stats), None, mode)?;
                let c = stats.mean.len();
                updates.push((self.running_mean, Tensor::from_vec(&[c], stats.mean)?));
                updates.push((self.running_var, Tensor::from_vec(&[c], stats.var)?));
                out
            }
            Mode::Eval => batchnorm2d_forward(&z, store.value(self.gamma), store.value(self.beta), None, Some(&stats), mode)?,
        };
        Ok((y, ConvBnTape { bn }))
    }

    fn backward(
        &self,
        store: &ParamStore,
        input: &Tensor,
        tape: &ConvBnTape,
        dy: &Tensor,
        grads: &mut Vec<(ParamId, Tensor)>,
    ) -> Result<Tensor> {
        let bn = batchnorm2d_backward(&tape.bn, store.value(self.gamma), dy)?;
        let conv = conv2d_backward(input, store.value(self.weight), &bn.input, self.geom)?;
        grads.push((self.gamma, bn.gamma));
        grads.push((self.beta, bn.beta));
        grads.push((self.weight, conv.weight));
        grads.push((self.bias, conv.bias));
        Ok(conv.input)
    }
}

#[derive(Debug, Clone)]
struct Block {
    a: ConvBn,
    b: ConvBn,
    shortcut: Option<ConvBn>,
}

struct BlockTape {
    input: Tensor,
    a: ConvBnTape,
    a_pre: Tensor,
    hidden: Tensor,
    b: ConvBnTape,
    shortcut: Option<ConvBnTape>,
    sum: Tensor,
}

impl Block {
    fn forward(
        &self,
        store: &ParamStore,
        x: Tensor,
        mode: Mode,
        updates: &mut Vec<StatUpdate>,
    ) -> Result<(Tensor, BlockTape)> {
        let (a_pre, a) = self.a.forward(store, &x, mode, updates)?;
        let hidden = relu_forward(&a_pre);
        let (mut sum, b) = self.b.forward(store, &hidden, mode, updates)?;
        let shortcut = match &self.shortcut {
            Some(s) => {
                let (sc, tape) = s.forward(store, &x, mode, updates)?;
                sum.add_assign(&sc)?;
                Some(tape)
            }
            None => {
                sum.add_assign(&x)?;
                None
            }
        };
        let out = relu_forward(&sum);
        Ok((
            out,
            BlockTape {
                input: x,
                a,
                a_pre,
                hidden,
                b,
                shortcut,
                sum,
            },
        ))
    }

    fn backward(
        &self,
        store: &ParamStore,
        tape: &BlockTape,
        dout: &Tensor,
        grads: &mut Vec<(ParamId, Tensor)>,
    ) -> Result<Tensor> {
        let dsum = relu_backward(&tape.sum, dout)?;
        let dhidden = self.b.backward(store, &tape.hidden, &tape.b, &dsum, grads)?;
        let da = relu_backward(&tape.a_pre, &dhidden)?;
        let mut dx = self.a.backward(store, &tape.input, &tape.a, &da, grads)?;
        match (&self.shortcut, &tape.shortcut) {
            (Some(s), Some(st)) => {
                let dsc = s.backward(store, &tape.input, st, &dsum, grads)?;
                dx.add_assign(&dsc)?;
            }
            _ => dx.add_assign(&dsum)?,
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
        let b: Vec<f64> = (0..fan_out).map(|_| dist.sample(rng)).collect();
        Linear {
            weight: store.add(format!("{name}.weight"), Tensor::from_vec(&[fan_out, fan_in], w).expect("shape"), true),
            bias: store.add(format!("{name}.bias"), Tensor::from_vec(&[fan_out], b).expect("shape"), true),
        }
    }

    fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        linear_forward(x, store.value(self.weight), store.value(self.bias))
    }

    fn backward(&self, store: &ParamStore, x: &Tensor, dy: &Tensor, grads: &mut Vec<(ParamId, Tensor)>) -> Result<Tensor> {
        let g = linear_backward(x, store.value(self.weight), dy)?;
        grads.push((self.weight, g.weight));
        grads.push((self.bias, g.bias));
        Ok(g.input)
    }
}

#[derive(Debug, Clone)]
struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

enum HeadTape {
    Triplet,
    Simclr { hidden_pre: Tensor, hidden: Tensor },
}

struct Tape {
    input: Tensor,
    stem: ConvBnTape,
    stem_pre: Tensor,
    blocks: Vec<BlockTape>,
    pooled_shape: Vec<usize>,
    features: Tensor,
    head: Option<(HeadTape, Tensor)>,
}

/// Residual CNN with optional heads and a recorded tape for backward.
pub struct MicroResNet {
    arch: Architecture,
    store: ParamStore,
    stem: ConvBn,
    blocks: Vec<Block>,
    triplet: Option<Linear>,
    simclr: Option<Mlp>,
    classifier: Option<Linear>,
    tape: Option<Tape>,
}

impl MicroResNet {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let stem = ConvBn::new(&mut store, "backbone.stem", config.in_channels, config.widths[0], 3, 1, rng);
        let mut blocks = Vec::new();
        let mut cin = config.widths[0];
        for (si, &width) in config.widths.iter().enumerate() {
            for bi in 0..2 {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                let name = format!("backbone.stage{si}.block{bi}");
                let a = ConvBn::new(&mut store, &format!("{name}.conv_a"), cin, width, 3, stride, rng);
                let b = ConvBn::new(&mut store, &format!("{name}.conv_b"), width, width, 3, 1, rng);
                let shortcut = (stride != 1 || cin != width)
                    .then(|| ConvBn::new(&mut store, &format!("{name}.shortcut"), cin, width, 1, stride, rng));
                blocks.push(Block { a, b, shortcut });
                cin = width;
            }
        }
        Ok(MicroResNet {
            arch: Architecture {
                config,
                triplet_head: None,
                simclr_head: None,
                classifier: None,
            },
            store,
            stem,
            blocks,
            triplet: None,
            simclr: None,
            classifier: None,
            tape: None,
        })
    }

    /// Builds a model with the given layout; parameter values come from `rng`.
    pub fn with_architecture(arch: &Architecture, rng: &mut impl Rng) -> Result<Self> {
        let mut m = Self::new(arch.config.clone(), rng)?;
        if let Some(dim) = arch.triplet_head {
            m.attach_triplet_head(dim, rng)?;
        }
        if let Some(spec) = arch.simclr_head {
            m.attach_simclr_head(spec, rng)?;
        }
        if let Some(spec) = arch.classifier {
            m.attach_classifier(spec, rng)?;
        }
        Ok(m)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.config.feature_dim()
    }

    fn embedding_dim(&self) -> Option<usize> {
        self.arch
            .triplet_head
            .or(self.arch.simclr_head.map(|s| s.out))
    }

    pub fn attach_triplet_head(&mut self, dim: usize, rng: &mut impl Rng) -> Result<()> {
        if self.triplet.is_some() || self.simclr.is_some() {
            bail!(State, "a projection head is already attached");
        }
        if self.classifier.is_some() {
            bail!(State, "attach projection heads before the classifier");
        }
        let fdim = self.feature_dim();
        self.triplet = Some(Linear::new(&mut self.store, "triplet_head", fdim, dim, rng));
        self.arch.triplet_head = Some(dim);
        self.tape = None;
        Ok(())
    }

    pub fn attach_simclr_head(&mut self, spec: MlpSpec, rng: &mut impl Rng) -> Result<()> {
        if self.triplet.is_some() || self.simclr.is_some() {
            bail!(State, "a projection head is already attached");
        }
        if self.classifier.is_some() {
            bail!(State, "attach projection heads before the classifier");
        }
        let f = self.feature_dim();
        let fc1 = Linear::new(&mut self.store, "simclr_head.fc1", f, spec.hidden, rng);
        let fc2 = Linear::new(&mut self.store, "simclr_head.fc2", spec.hidden, spec.out, rng);
        self.simclr = Some(Mlp { fc1, fc2 });
        self.arch.simclr_head = Some(spec);
        self.tape = None;
        Ok(())
    }

    pub fn attach_classifier(&mut self, spec: ClassifierSpec, rng: &mut impl Rng) -> Result<()> {
        if self.classifier.is_some() {
            bail!(State, "classifier already attached");
        }
        let fan_in = match spec.input {
            ClassifierInput::Features => self.feature_dim(),
            ClassifierInput::Embedding => match self.embedding_dim() {
                Some(d) => d,
                None => bail!(State, "classifier on embedding needs a projection head"),
            },
        };
        if spec.classes < 2 {
            bail!(Argument, "classifier needs at least 2 classes");
        }
        self.classifier = Some(Linear::new(&mut self.store, "classifier", fan_in, spec.classes, rng));
        self.arch.classifier = Some(spec);
        self.tape = None;
        Ok(())
    }

    fn remove_params(&mut self, prefix: &str) {
        let map = self.store.remove_prefix(prefix);
        for id in self.stem.ids_mut() {
            remap_id(id, &map);
        }
        for b in &mut self.blocks {
            for id in b.a.ids_mut().into_iter().chain(b.b.ids_mut()) {
                remap_id(id, &map);
            }
            if let Some(s) = &mut b.shortcut {
                for id in s.ids_mut() {
                    remap_id(id, &map);
                }
            }
        }
        let mut linears: Vec<&mut Linear> = Vec::new();
        if let Some(t) = &mut self.triplet {
            linears.push(t);
        }
        if let Some(m) = &mut self.simclr {
            linears.push(&mut m.fc1);
            linears.push(&mut m.fc2);
        }
        if let Some(c) = &mut self.classifier {
            linears.push(c);
        }
        for l in linears {
            remap_id(&mut l.weight, &map);
            remap_id(&mut l.bias, &map);
        }
        self.tape = None;
    }

    pub fn detach_classifier(&mut self) {
        if self.classifier.take().is_some() {
            self.remove_params(CLASSIFIER_PREFIX);
            self.arch.classifier = None;
        }
    }

    pub fn detach_simclr_head(&mut self) -> Result<()> {
        if matches!(self.arch.classifier, Some(ClassifierSpec { input: ClassifierInput::Embedding, .. })) && self.simclr.is_some() {
            bail!(State, "classifier reads the projection head; detach it first");
        }
        if self.simclr.take().is_some() {
            self.remove_params(SIMCLR_HEAD_PREFIX);
            self.arch.simclr_head = None;
        }
        Ok(())
    }

    pub fn detach_triplet_head(&mut self) -> Result<()> {
        if matches!(self.arch.classifier, Some(ClassifierSpec { input: ClassifierInput::Embedding, .. })) && self.triplet.is_some() {
            bail!(State, "classifier reads the projection head; detach it first");
        }
        if self.triplet.take().is_some() {
            self.remove_params(TRIPLET_HEAD_PREFIX);
            self.arch.triplet_head = None;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        x.expect_rank(4, "model input")?;
        if x.dim(1) != self.arch.config.in_channels {
            bail!(Dimension, "model expects {} channels, got {}", self.arch.config.in_channels, x.dim(1));
        }
        let stride = self.arch.config.total_stride();
        check_side(x.dim(2), stride)?;
        check_side(x.dim(3), stride)
    }

    fn run(&self, x: Tensor, mode: Mode, updates: &mut Vec<StatUpdate>) -> Result<(ForwardOutput, Tape)> {
        self.check_input(&x)?;
        let (stem_pre, stem) = self.stem.forward(&self.store, &x, mode, updates)?;
        let mut h = relu_forward(&stem_pre);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, tape) = b.forward(&self.store, h, mode, updates)?;
            h = out;
            blocks.push(tape);
        }
        let pooled_shape = h.shape().to_vec();
        let features = global_avg_pool_forward(&h)?;

        let (embedding, head) = if let Some(t) = &self.triplet {
            (Some(t.forward(&self.store, &features)?), Some(HeadTape::Triplet))
        } else if let Some(m) = &self.simclr {
            let hidden_pre = m.fc1.forward(&self.store, &features)?;
            let hidden = relu_forward(&hidden_pre);
            let out = m.fc2.forward(&self.store, &hidden)?;
            (Some(out), Some(HeadTape::Simclr { hidden_pre, hidden }))
        } else {
            (None, None)
        };

        let logits = match (&self.classifier, self.arch.classifier) {
            (Some(c), Some(spec)) => {
                let input = match spec.input {
                    ClassifierInput::Features => &features,
                    ClassifierInput::Embedding => embedding.as_ref().expect("embedding head present"),
                };
                Some(c.forward(&self.store, input)?)
            }
            _ => None,
        };
        for t in [Some(&features), embedding.as_ref(), logits.as_ref()].into_iter().flatten() {
            t.ensure_finite("model forward")?;
        }
        let out = ForwardOutput {
            features: features.clone(),
            embedding: embedding.clone(),
            logits,
        };
        let tape = Tape {
            input: x,
            stem,
            stem_pre,
            blocks,
            pooled_shape,
            features,
            head: head.map(|h| (h, embedding.unwrap_or_else(|| Tensor::zeros(&[0])))),
        };
        Ok((out, tape))
    }

    /// Forward pass that records activations for [`MicroResNet::backward`].
    /// Train mode updates batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<ForwardOutput> {
        let mut updates = Vec::new();
        let (out, tape) = self.run(x.clone(), mode, &mut updates)?;
        for (id, v) in updates {
            self.store.get_mut(id).value = v;
        }
        self.tape = Some(tape);
        Ok(out)
    }

    /// Eval-mode forward without recording or mutating anything.
    pub fn infer(&self, x: &Tensor) -> Result<ForwardOutput> {
        let mut updates = Vec::new();
        let (out, _) = self.run(x.clone(), Mode::Eval, &mut updates)?;
        debug_assert!(updates.is_empty());
        Ok(out)
    }

    /// Back-propagates `upstream` through the last recorded forward pass,
    /// overwriting every gradient slot. Parameters outside `scope` get zero.
    pub fn backward(&mut self, upstream: &OutputGrads, scope: BackwardScope) -> Result<()> {
        let Some(tape) = self.tape.take() else {
            bail!(State, "backward called without a recorded forward pass");
        };
        let store = &self.store;
        let mut grads: Vec<(ParamId, Tensor)> = Vec::new();
        let n = tape.features.dim(0);

        let mut dfeat = match &upstream.features {
            Some(g) => {
                g.same_shape(&tape.features, "feature gradient")?;
                g.clone()
            }
            None => Tensor::zeros(tape.features.shape()),
        };
        let mut demb: Option<Tensor> = match (&upstream.embedding, &tape.head) {
            (Some(g), Some((_, emb))) => {
                g.same_shape(emb, "embedding gradient")?;
                Some(g.clone())
            }
            (Some(_), None) => bail!(State, "embedding gradient given but no projection head attached"),
            (None, _) => None,
        };

        if let Some(dlogits) = &upstream.logits {
            let (Some(c), Some(spec)) = (&self.classifier, self.arch.classifier) else {
                bail!(State, "logit gradient given but no classifier attached");
            };
            if dlogits.shape() != [n, spec.classes] {
                bail!(Dimension, "logit gradient shape {:?}", dlogits.shape());
            }
            match spec.input {
                ClassifierInput::Features => {
                    let dx = c.backward(store, &tape.features, dlogits, &mut grads)?;
                    dfeat.add_assign(&dx)?;
                }
                ClassifierInput::Embedding => {
                    let (_, emb) = tape.head.as_ref().expect("embedding head present");
                    let dx = c.backward(store, emb, dlogits, &mut grads)?;
                    match &mut demb {
                        Some(d) => d.add_assign(&dx)?,
                        None => demb = Some(dx),
                    }
                }
            }
        }

        if let (Some(d), Some((head, _))) = (&demb, &tape.head) {
            let dx = match head {
                HeadTape::Triplet => {
                    let t = self.triplet.as_ref().expect("triplet head");
                    t.backward(store, &tape.features, d, &mut grads)?
                }
                HeadTape::Simclr { hidden_pre, hidden } => {
                    let m = self.simclr.as_ref().expect("simclr head");
                    let dh = m.fc2.backward(store, hidden, d, &mut grads)?;
                    let dpre = relu_backward(hidden_pre, &dh)?;
                    m.fc1.backward(store, &tape.features, &dpre, &mut grads)?
                }
            };
            dfeat.add_assign(&dx)?;
        }

        if scope == BackwardScope::Full {
            let mut dh = global_avg_pool_backward(&tape.pooled_shape, &dfeat)?;
            for (b, bt) in self.blocks.iter().zip(&tape.blocks).rev() {
                dh = b.backward(store, bt, &dh, &mut grads)?;
            }
            let dstem = relu_backward(&tape.stem_pre, &dh)?;
            self.stem.backward(store, &tape.input, &tape.stem, &dstem, &mut grads)?;
        }

        self.store.zero_grads();
        for (id, g) in grads {
            g.ensure_finite("gradient")?;
            self.store.set_grad(id, g)?;
        }
        Ok(())
    }

    /// Copies values from a checkpoint-like list of named tensors.
    pub fn load_values<'a>(&mut self, values: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let mut seen = 0;
        for (name, v) in values {
            let Some(id) = self.store.find(name) else {
                bail!(Load, "checkpoint parameter {name} does not exist in the model");
            };
            let p = self.store.get_mut(id);
            if p.value.shape() != v.shape() {
                bail!(Load, "parameter {name}: checkpoint shape {:?}, model shape {:?}", v.shape(), p.value.shape());
            }
            p.value = v.clone();
            seen += 1;
        }
        if seen != self.store.len() {
            bail!(Load, "checkpoint provides {seen} of {} parameters", self.store.len());
        }
        self.tape = None;
        Ok(())
    }
}
