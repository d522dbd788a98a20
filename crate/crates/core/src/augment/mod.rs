// SPDX-License-Identifier: Apache-2.0

//! Image buffers, the ten primary augmentations, and seeded pipelines.

pub mod image;
pub mod ops;
pub mod pipeline;

use serde::{Deserialize, Serialize};

pub use image::{images_to_tensor, ImageBuffer};
pub use ops::{JitterFactors, JitterRanges, MorphKind};
pub use pipeline::{default_probability, AugOp, AugPipeline, GatedOp};

use crate::error::{bail, Result};

/// Side lengths used by the preprocessing stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Every image is first resized to this square side.
    pub resize_side: usize,
    /// Network input side for supervised and triplet training.
    pub crop_side: usize,
    /// Network input side for contrastive views.
    pub simclr_side: usize,
    /// Minimum visible area kept by the contrastive crop.
    pub simclr_min_area: f64,
}

impl Geometry {
    pub const FULL_RESIZE: usize = 256;
    pub const FULL_CROP: usize = 224;

    pub fn full_scale() -> Self {
        Geometry {
            resize_side: 256,
            crop_side: 224,
            simclr_side: 96,
            simclr_min_area: 0.60,
        }
    }

    pub fn desk() -> Self {
        Geometry {
            resize_side: 40,
            crop_side: 32,
            simclr_side: 32,
            simclr_min_area: 0.60,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_side == 0 || self.crop_side > self.resize_side || self.simclr_side == 0 {
            bail!(Config, "geometry needs 0 < crop_side <= resize_side and simclr_side > 0");
        }
        ops::simclr_crop_side(self.resize_side, self.simclr_min_area)?;
        Ok(())
    }

    /// Crop side for a `randomcrop<N>` token. The base token (224) maps to
    /// the configured crop side; other sizes keep the same fraction of the
    /// resized image as they would at 256 pixels.
    pub fn crop_for_token(&self, n: usize) -> Result<usize> {
        if n == 0 || n > Self::FULL_RESIZE {
            bail!(Parse, "crop size {n} outside 1..=256");
        }
        if n == Self::FULL_CROP {
            return Ok(self.crop_side);
        }
        let frac = (n as f64 / Self::FULL_RESIZE as f64).powi(2);
        ops::simclr_crop_side(self.resize_side, frac)
    }

    /// Crop side of the contrastive views.
    pub fn simclr_crop(&self) -> Result<usize> {
        ops::simclr_crop_side(self.resize_side, self.simclr_min_area)
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::desk()
    }
}

/// Resize, centre crop, resize to the network side and normalise; no randomness.
pub fn eval_pipeline(geom: &Geometry, final_side: usize) -> Result<AugPipeline> {
    AugPipeline::from_ops(
        vec![
            AugOp::Resize(geom.resize_side),
            AugOp::CenterCrop(geom.crop_side),
            AugOp::Resize(final_side),
            AugOp::imagenet_normalize(),
        ],
        0,
    )
}
