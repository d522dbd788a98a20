// SPDX-License-Identifier: Apache-2.0

//! The augmentation combination space: a base random crop plus up to three
//! of eight combinable primitives, and the spec-string grammar
//! (`randomcrop224,hflip,gray`).

use std::fmt;
use std::str::FromStr;

use crate::augment::{AugOp, AugPipeline, Geometry, GatedOp};
use crate::error::{bail, Error, Result};

pub const BASE_TOKEN: &str = "randomcrop224";
pub const SIMCLR_BASE_TOKEN: &str = "randomcrop198";

/// Combinable primitives in canonical (table) order.
pub const PRIMITIVES: [&str; 8] = [
    "morpho_erosion",
    "morpho_dilation",
    "affine",
    "colorjitter",
    "hflip",
    "invert",
    "gaussianblur",
    "gray",
];

/// An ordered list of op tokens; the first is always a random crop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugSpec {
    names: Vec<String>,
}

fn crop_size(token: &str) -> Option<usize> {
    let digits = token.strip_prefix("randomcrop")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

impl AugSpec {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let Some(first) = names.first() else {
            bail!(Parse, "empty augmentation spec");
        };
        if crop_size(first).is_none() {
            bail!(Parse, "spec must start with a randomcrop<N> token, got {first:?}");
        }
        for (i, n) in names.iter().enumerate().skip(1) {
            if !PRIMITIVES.contains(&n.as_str()) {
                bail!(Parse, "unknown augmentation token {n:?}");
            }
            if names[..i].contains(n) {
                bail!(Parse, "duplicate augmentation token {n:?}");
            }
        }
        Ok(AugSpec { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of tokens including the base crop.
    pub fn order(&self) -> usize {
        self.names.len()
    }

    pub fn base(&self) -> &str {
        &self.names[0]
    }

    pub fn base_crop(&self) -> usize {
        crop_size(&self.names[0]).expect("validated on construction")
    }

    /// Same extras on a different base crop token.
    pub fn with_base(&self, base: &str) -> Result<Self> {
        let mut names = self.names.clone();
        names[0] = base.to_string();
        Self::new(names)
    }
}

impl fmt::Display for AugSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names.join(","))
    }
}

impl FromStr for AugSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            bail!(Parse, "empty augmentation spec");
        }
        let names = s.split(',').map(|t| t.trim().replace("\\_", "_")).collect::<Vec<_>>();
        if names.iter().any(|t| t.is_empty()) {
            bail!(Parse, "empty token in {s:?}");
        }
        Self::new(names)
    }
}

/// All specs `base + subset` for subsets of `primitives` of size `0..=max_extra`,
/// ordered by subset size and then lexicographically by primitive index.
pub fn enumerate_combinations(base: &str, primitives: &[&str], max_extra: usize) -> Result<Vec<AugSpec>> {
    for (i, p) in primitives.iter().enumerate() {
        if primitives[..i].contains(p) {
            bail!(Argument, "duplicate primitive token {p:?}");
        }
    }
    if max_extra > primitives.len() {
        bail!(Argument, "max_extra {max_extra} exceeds {} primitives", primitives.len());
    }
    let mut out = Vec::new();
    for size in 0..=max_extra {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let mut names = vec![base.to_string()];
            names.extend(idx.iter().map(|&i| primitives[i].to_string()));
            out.push(AugSpec::new(names)?);
            // next combination in lexicographic order
            let Some(pos) = (0..size).rev().find(|&i| idx[i] < primitives.len() - size + i) else {
                break;
            };
            idx[pos] += 1;
            for j in pos + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// The 93-spec pool over the canonical primitives.
pub fn default_pool(base: &str) -> Result<Vec<AugSpec>> {
    enumerate_combinations(base, &PRIMITIVES, 3)
}

pub fn op_for_token(token: &str) -> Option<AugOp> {
    Some(match token {
        "morpho_erosion" => AugOp::erosion(),
        "morpho_dilation" => AugOp::dilation(),
        "affine" => AugOp::affine(),
        "colorjitter" => AugOp::colorjitter(),
        "hflip" => AugOp::HFlip,
        "invert" => AugOp::Invert,
        "gaussianblur" => AugOp::gaussian_blur(),
        "gray" => AugOp::Gray,
        _ => return None,
    })
}

/// What follows the spec's own ops before normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineTail {
    /// Centre crop to the network side (supervised and triplet training);
    /// a resize when the spec's crop is already smaller than that side.
    Supervised,
    /// Resize to the contrastive view side.
    Contrastive,
}

/// Full training pipeline: resize → spec ops → tail → normalize.
pub fn build_pipeline(spec: &AugSpec, geom: &Geometry, tail: PipelineTail, seed: u64) -> Result<AugPipeline> {
    geom.validate()?;
    let crop = geom.crop_for_token(spec.base_crop())?;
    let mut ops = vec![AugOp::Resize(geom.resize_side), AugOp::RandomCrop(crop)];
    for t in &spec.names()[1..] {
        ops.push(op_for_token(t).expect("validated token"));
    }
    match tail {
        PipelineTail::Supervised if crop >= geom.crop_side => ops.push(AugOp::CenterCrop(geom.crop_side)),
        PipelineTail::Supervised => ops.push(AugOp::Resize(geom.crop_side)),
        PipelineTail::Contrastive => ops.push(AugOp::Resize(geom.simclr_side)),
    }
    ops.push(AugOp::imagenet_normalize());
    let gated = ops
        .into_iter()
        .map(|op| GatedOp {
            probability: crate::augment::default_probability(&op),
            op,
        })
        .collect();
    AugPipeline::new(gated, seed)
}

/// Parses a spec string straight into a pipeline.
pub fn parse_spec(s: &str, geom: &Geometry, tail: PipelineTail, seed: u64) -> Result<AugPipeline> {
    build_pipeline(&s.parse()?, geom, tail, seed)
}

/// One spec per line, newline-terminated.
pub fn format_pool(specs: &[AugSpec]) -> String {
    specs.iter().map(|s| format!("{s}\n")).collect()
}
