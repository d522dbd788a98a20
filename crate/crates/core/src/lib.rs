// SPDX-License-Identifier: Apache-2.0

//! Experiment engine for comparing cross-entropy, triplet-embedding and
//! SimCLR-style contrastive pretraining on letter images.
//!
//! The crate is organised bottom-up: [`numerics`] (tensors, MicroResNet,
//! optimizers), [`augment`] (image primitives and seeded pipelines),
//! [`combos`] (the augmentation combination space), [`losses`], [`data`],
//! [`trainer`] and [`analysis`].

pub mod analysis;
pub mod augment;
pub mod combos;
pub mod data;
pub mod error;
pub mod losses;
pub mod numerics;
pub mod parallel;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::Tensor;
