// SPDX-License-Identifier: Apache-2.0

use rand::Rng;

use super::image::ImageBuffer;
use super::ops::{self, JitterRanges, MorphKind};
use crate::error::{bail, Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub enum AugOp {
    Resize(usize),
    RandomCrop(usize),
    CenterCrop(usize),
    HFlip,
    Erosion { kernel_w: usize, kernel_h: usize },
    Dilation { kernel_w: usize, kernel_h: usize },
    Affine { shift_limit: f64, scale_limit: f64, rotate_limit_deg: f64 },
    ColorJitter(JitterRanges),
    GaussianBlur { blur_limit: (usize, usize), sigma: f64 },
    Invert,
    Gray,
    Normalize { mean: Vec<f64>, std: Vec<f64> },
}

impl AugOp {
    pub fn erosion() -> Self {
        AugOp::Erosion { kernel_w: 7, kernel_h: 7 }
    }

    pub fn dilation() -> Self {
        AugOp::Dilation { kernel_w: 7, kernel_h: 7 }
    }

    pub fn affine() -> Self {
        AugOp::Affine {
            shift_limit: 0.05,
            scale_limit: 0.1,
            rotate_limit_deg: 30.0,
        }
    }

    pub fn colorjitter() -> Self {
        AugOp::ColorJitter(JitterRanges::default())
    }

    pub fn gaussian_blur() -> Self {
        AugOp::GaussianBlur { blur_limit: (3, 7), sigma: 0.0 }
    }

    pub fn imagenet_normalize() -> Self {
        AugOp::Normalize {
            mean: ops::IMAGENET_MEAN.to_vec(),
            std: ops::IMAGENET_STD.to_vec(),
        }
    }

    /// Geometric ops move pixels around; the rest change values in place.
    pub fn is_spatial(&self) -> bool {
        matches!(
            self,
            AugOp::Resize(_)
                | AugOp::RandomCrop(_)
                | AugOp::CenterCrop(_)
                | AugOp::HFlip
                | AugOp::Erosion { .. }
                | AugOp::Dilation { .. }
                | AugOp::Affine { .. }
        )
    }

    /// Token as used in augmentation spec strings.
    pub fn token(&self) -> String {
        match self {
            AugOp::Resize(s) => format!("resize{s}"),
            AugOp::RandomCrop(s) => format!("randomcrop{s}"),
            AugOp::CenterCrop(s) => format!("centercrop{s}"),
            AugOp::HFlip => "hflip".into(),
            AugOp::Erosion { .. } => "morpho_erosion".into(),
            AugOp::Dilation { .. } => "morpho_dilation".into(),
            AugOp::Affine { .. } => "affine".into(),
            AugOp::ColorJitter(_) => "colorjitter".into(),
            AugOp::GaussianBlur { .. } => "gaussianblur".into(),
            AugOp::Invert => "invert".into(),
            AugOp::Gray => "gray".into(),
            AugOp::Normalize { .. } => "normalize".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            AugOp::Resize(s) | AugOp::RandomCrop(s) | AugOp::CenterCrop(s) => *s >= 1,
            AugOp::Erosion { kernel_w, kernel_h } | AugOp::Dilation { kernel_w, kernel_h } => {
                kernel_w % 2 == 1 && kernel_h % 2 == 1
            }
            AugOp::Affine { shift_limit, scale_limit, rotate_limit_deg } => {
                *shift_limit >= 0.0 && (0.0..1.0).contains(scale_limit) && *rotate_limit_deg >= 0.0
            }
            AugOp::ColorJitter(r) => [r.brightness, r.contrast, r.saturation, r.hue]
                .iter()
                .all(|(lo, hi)| lo <= hi),
            AugOp::GaussianBlur { blur_limit: (lo, hi), sigma } => *lo >= 1 && lo <= hi && *sigma >= 0.0,
            AugOp::Normalize { mean, std } => mean.len() == std.len() && std.iter().all(|&s| s > 0.0),
            AugOp::HFlip | AugOp::Invert | AugOp::Gray => true,
        };
        if !ok {
            bail!(Argument, "invalid parameters for {}: {self:?}", self.token());
        }
        Ok(())
    }

    pub fn apply(&self, img: &ImageBuffer, rng: &mut impl Rng) -> Result<ImageBuffer> {
        match self {
            AugOp::Resize(s) => ops::resize(img, *s),
            AugOp::RandomCrop(s) => ops::random_crop(img, *s, rng),
            AugOp::CenterCrop(s) => ops::center_crop(img, *s),
            AugOp::HFlip => Ok(ops::hflip(img)),
            AugOp::Erosion { kernel_w, kernel_h } => ops::morphology(img, MorphKind::Erosion, *kernel_w, *kernel_h),
            AugOp::Dilation { kernel_w, kernel_h } => ops::morphology(img, MorphKind::Dilation, *kernel_w, *kernel_h),
            AugOp::Affine { shift_limit, scale_limit, rotate_limit_deg } => {
                ops::affine(img, *shift_limit, *scale_limit, *rotate_limit_deg, rng)
            }
            AugOp::ColorJitter(r) => Ok(ops::colorjitter(img, r, rng)),
            AugOp::GaussianBlur { blur_limit, sigma } => ops::gaussian_blur(img, *blur_limit, *sigma, rng),
            AugOp::Invert => Ok(ops::invert(img)),
            AugOp::Gray => Ok(ops::gray(img)),
            AugOp::Normalize { mean, std } => ops::normalize(img, mean, std),
        }
    }
}

/// Default gate probability: crops and resizes always run, everything else 0.5.
pub fn default_probability(op: &AugOp) -> f64 {
    match op {
        AugOp::Resize(_) | AugOp::RandomCrop(_) | AugOp::CenterCrop(_) | AugOp::Normalize { .. } => 1.0,
        _ => 0.5,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedOp {
    pub op: AugOp,
    pub probability: f64,
}

/// Ordered, probability-gated ops. The random stream for one application is
/// derived from `(seed, image_index, epoch)`, so results do not depend on
/// which images were processed before.
#[derive(Debug, Clone, PartialEq)]
pub struct AugPipeline {
    ops: Vec<GatedOp>,
    seed: u64,
}

impl AugPipeline {
    pub fn new(ops: Vec<GatedOp>, seed: u64) -> Result<Self> {
        let mut side: Option<usize> = None;
        let mut normalized = false;
        for g in &ops {
            g.op.validate()?;
            if !(0.0..=1.0).contains(&g.probability) {
                bail!(Argument, "probability {} for {} outside [0,1]", g.probability, g.op.token());
            }
            if normalized {
                bail!(Composition, "{} follows normalize", g.op.token());
            }
            match &g.op {
                AugOp::Resize(s) => side = Some(*s),
                AugOp::RandomCrop(s) | AugOp::CenterCrop(s) => {
                    if let Some(cur) = side {
                        if *s > cur {
                            bail!(Composition, "{} exceeds the {cur}-pixel image it receives", g.op.token());
                        }
                    }
                    if g.probability == 1.0 || side.is_none() {
                        side = Some(*s);
                    }
                }
                AugOp::Normalize { .. } => normalized = true,
                _ => {}
            }
        }
        Ok(AugPipeline { ops, seed })
    }

    /// Ops with their default probabilities.
    pub fn from_ops(ops: Vec<AugOp>, seed: u64) -> Result<Self> {
        let gated = ops
            .into_iter()
            .map(|op| GatedOp {
                probability: default_probability(&op),
                op,
            })
            .collect();
        Self::new(gated, seed)
    }

    pub fn ops(&self) -> &[GatedOp] {
        &self.ops
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        AugPipeline {
            ops: self.ops.clone(),
            seed,
        }
    }

    /// True when no op draws randomness or is gated.
    pub fn is_deterministic(&self) -> bool {
        self.ops.iter().all(|g| {
            let random = matches!(
                g.op,
                AugOp::RandomCrop(_) | AugOp::Affine { .. } | AugOp::ColorJitter(_) | AugOp::GaussianBlur { .. }
            );
            !random && (g.probability == 1.0 || g.probability == 0.0)
        })
    }

    pub fn apply(&self, img: &ImageBuffer, image_index: u64, epoch: u64) -> Result<ImageBuffer> {
        self.apply_stream(img, &[tag::AUGMENT, image_index, epoch])
    }

    /// Applies the pipeline on an explicitly keyed stream.
    pub fn apply_stream(&self, img: &ImageBuffer, coords: &[u64]) -> Result<ImageBuffer> {
        let mut rng = rng::stream(self.seed, coords);
        let mut cur = img.clone();
        for g in &self.ops {
            // the gate draw happens for every op so later ops see a stable stream
            let u: f64 = rng.random();
            if u < g.probability {
                cur = g.op.apply(&cur, &mut rng).map_err(|e| match e {
                    Error::Argument(m) => Error::Composition(format!("{}: {m}", g.op.token())),
                    other => other,
                })?;
            }
        }
        Ok(cur)
    }
}
