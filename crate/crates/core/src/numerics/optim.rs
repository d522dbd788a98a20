// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state keyed by parameter name, so heads can be swapped between stages.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    adam: AdamConfig,
    step: u64,
    moments: Vec<(String, Tensor, Tensor)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            adam: AdamConfig::default(),
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter accepted by `filter`.
    pub fn step(&mut self, store: &mut ParamStore, filter: impl Fn(&str) -> bool) -> Result<()> {
        for p in store.iter() {
            if p.trainable && filter(&p.name) && !p.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        for p in store.iter_mut() {
            if !p.trainable || !filter(&p.name) {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *v -= self.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let idx = match self.moments.iter().position(|(n, _, _)| *n == p.name) {
                        Some(i) => i,
                        None => {
                            self.moments.push((p.name.clone(), Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())));
                            self.moments.len() - 1
                        }
                    };
                    let (_, m, v) = &mut self.moments[idx];
                    if m.shape() != p.value.shape() {
                        bail!(Dimension, "optimizer moments for {} do not match the parameter", p.name);
                    }
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    let (md, vd) = (m.data_mut(), v.data_mut());
                    for (i, (w, &g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
                        md[i] = beta1 * md[i] + (1.0 - beta1) * g;
                        vd[i] = beta2 * vd[i] + (1.0 - beta2) * g * g;
                        let mhat = md[i] / bc1;
                        let vhat = vd[i] / bc2;
                        *w -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    StepDecay { gamma: f64, step_epochs: usize },
    CosineAnnealing { t_max: usize, eta_min: f64 },
}

impl LrSchedule {
    /// Learning rate at `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize, base_lr: f64) -> Result<f64> {
        match *self {
            LrSchedule::Constant => Ok(base_lr),
            LrSchedule::StepDecay { gamma, step_epochs } => {
                if step_epochs == 0 {
                    bail!(Argument, "step decay needs step_epochs >= 1");
                }
                Ok(base_lr * gamma.powi((epoch / step_epochs) as i32))
            }
            LrSchedule::CosineAnnealing { t_max, eta_min } => {
                if t_max == 0 || epoch > t_max {
                    bail!(Argument, "epoch {epoch} outside cosine schedule [0, {t_max}]");
                }
                let phase = std::f64::consts::PI * epoch as f64 / t_max as f64;
                Ok(eta_min + 0.5 * (base_lr - eta_min) * (1.0 + phase.cos()))
            }
        }
    }
}
