// SPDX-License-Identifier: Apache-2.0

//! Dense float64 tensors, residual-CNN layers with manual backward passes,
//! optimizers, learning-rate schedules and checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod params;
pub mod resnet;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use layers::Mode;
pub use optim::{LrSchedule, Optimizer, OptimizerKind};
pub use params::{Param, ParamId, ParamStore};
pub use resnet::{
    Architecture, BackwardScope, ClassifierInput, ClassifierSpec, ForwardOutput, MicroResNet,
    MlpSpec, ModelConfig, OutputGrads,
};
pub use tensor::Tensor;
