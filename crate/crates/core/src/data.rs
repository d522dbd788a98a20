// SPDX-License-Identifier: Apache-2.0

//! Datasets: procedural glyphs, annotation crops, on-disk image folders,
//! seeded splits and the three batch builders.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::{AugPipeline, ImageBuffer};
use crate::error::{bail, Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    /// Stable identifier, unique within the dataset it was created in.
    pub id: u64,
    pub image: ImageBuffer,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub class_count: usize,
    pub items: Vec<Item>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, class_count: usize, items: Vec<Item>) -> Result<Self> {
        if let Some(bad) = items.iter().find(|it| it.label >= class_count) {
            bail!(Argument, "label {} outside [0, {class_count})", bad.label);
        }
        Ok(Dataset {
            name: name.into(),
            class_count,
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for it in &self.items {
            counts[it.label] += 1;
        }
        counts
    }

    /// Items grouped by label.
    pub fn by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, it) in self.items.iter().enumerate() {
            groups[it.label].push(i);
        }
        groups
    }

    pub fn subset(&self, indices: &[usize], name: &str) -> Dataset {
        Dataset {
            name: name.to_string(),
            class_count: self.class_count,
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }

    /// Label-free view used by the self-supervised path.
    pub fn images_only(&self) -> ImagePool<'_> {
        ImagePool {
            images: self.items.iter().map(|i| &i.image).collect(),
        }
    }
}

/// Images without labels.
#[derive(Debug, Clone)]
pub struct ImagePool<'a> {
    images: Vec<&'a ImageBuffer>,
}

impl<'a> ImagePool<'a> {
    pub fn from_images(images: Vec<&'a ImageBuffer>) -> Self {
        ImagePool { images }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, i: usize) -> &'a ImageBuffer {
        self.images[i]
    }
}

// ---------------------------------------------------------------- glyphs

#[derive(Debug, Clone, Copy)]
struct Stroke {
    from: (f64, f64),
    to: (f64, f64),
}

const TEMPLATE_SEED: u64 = 0x6c79_7068;

/// Fixed stroke template for a class id: three segments in the unit square.
fn template(class: usize) -> Vec<Stroke> {
    let mut rng = rng::stream(TEMPLATE_SEED, &[class as u64]);
    let pt = |rng: &mut rng::StreamRng| (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
    let mut strokes = Vec::new();
    let mut start = pt(&mut rng);
    for _ in 0..3 {
        let mut end = pt(&mut rng);
        // avoid tiny segments so every stroke is visible
        while ((end.0 - start.0) as f64).hypot(end.1 - start.1) < 0.3 {
            end = pt(&mut rng);
        }
        strokes.push(Stroke { from: start, to: end });
        start = if rng.random_bool(0.5) { end } else { pt(&mut rng) };
    }
    strokes
}

fn segment_distance(p: (f64, f64), s: &Stroke) -> f64 {
    let (dx, dy) = (s.to.0 - s.from.0, s.to.1 - s.from.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - s.from.0) * dx + (p.1 - s.from.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - s.from.0 - t * dx).hypot(p.1 - s.from.1 - t * dy)
}

const PAPER: [f64; 3] = [0.88, 0.84, 0.76];
const INK: [f64; 3] = [0.16, 0.12, 0.10];

fn render_glyph(class: usize, side: usize, rng: &mut impl Rng) -> ImageBuffer {
    let strokes = template(class);
    let off = (rng.random_range(-0.1..=0.1), rng.random_range(-0.1..=0.1));
    let theta = rng.random_range(-10.0f64..=10.0).to_radians();
    let thickness = rng.random_range(0.045..=0.075);
    let noise = Normal::new(0.0, 0.03).expect("valid std");
    let (sin, cos) = theta.sin_cos();
    let aa = 1.0 / side as f64;
    let mut px = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            // pixel centre in unit coordinates, mapped back into template space
            let u = (x as f64 + 0.5) / side as f64 - 0.5 - off.0;
            let v = (y as f64 + 0.5) / side as f64 - 0.5 - off.1;
            let p = (cos * u + sin * v + 0.5, -sin * u + cos * v + 0.5);
            let d = strokes.iter().map(|s| segment_distance(p, s)).fold(f64::INFINITY, f64::min);
            let ink = ((thickness - d) / aa + 0.5).clamp(0.0, 1.0);
            let n = noise.sample(rng);
            for c in 0..3 {
                let v = PAPER[c] * (1.0 - ink) + INK[c] * ink + n;
                px.push(v.clamp(0.0, 1.0));
            }
        }
    }
    ImageBuffer::new(side, side, 3, px).expect("valid dims")
}

/// Procedural letter-like glyphs: one stroke template per class, rendered
/// with seeded jitter in position, rotation, thickness and paper noise.
/// Items are ordered class-major; ids are their positions.
pub fn generate_glyphs(class_count: usize, per_class: usize, side: usize, seed: u64) -> Result<Dataset> {
    if class_count < 2 {
        bail!(Argument, "need at least 2 classes, got {class_count}");
    }
    if side < 8 {
        bail!(Argument, "glyph side must be >= 8, got {side}");
    }
    let mut items = Vec::with_capacity(class_count * per_class);
    for class in 0..class_count {
        for k in 0..per_class {
            let mut rng = rng::stream(seed, &[class as u64, k as u64]);
            let id = items.len() as u64;
            items.push(Item {
                id,
                image: render_glyph(class, side, &mut rng),
                label: class,
            });
        }
    }
    Dataset::new(format!("glyphs-{class_count}x{per_class}-s{seed}"), class_count, items)
}

// ---------------------------------------------------------------- annotations

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_path: String,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub label: String,
}

/// Reads `image_path,x,y,w,h,label` records.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let rec: AnnotationRecord = rec.map_err(|e| Error::Record {
            line: i + 2,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Crops one item per record. Relative image paths resolve against `base_dir`.
pub fn crop_from_annotations(
    records: &[AnnotationRecord],
    base_dir: &Path,
    label_map: &BTreeMap<String, usize>,
) -> Result<Dataset> {
    let mut cache: BTreeMap<PathBuf, ImageBuffer> = BTreeMap::new();
    let class_count = label_map.values().max().map_or(0, |m| m + 1);
    let mut items = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let line = i + 2;
        let Some(&label) = label_map.get(&r.label) else {
            return Err(Error::Record {
                line,
                reason: format!("label {:?} not in label map", r.label),
            });
        };
        let path = base_dir.join(&r.image_path);
        if !cache.contains_key(&path) {
            let img = if path.extension().is_some_and(|e| e == "pgm") {
                let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                ImageBuffer::read_pgm(&mut std::io::BufReader::new(f))?
            } else {
                ImageBuffer::load_png(&path)?
            };
            cache.insert(path.clone(), img);
        }
        let img = &cache[&path];
        if r.w == 0 || r.h == 0 || r.x + r.w > img.width() || r.y + r.h > img.height() {
            return Err(Error::Record {
                line,
                reason: format!(
                    "box ({},{},{},{}) outside {}x{} image {}",
                    r.x,
                    r.y,
                    r.w,
                    r.h,
                    img.width(),
                    img.height(),
                    r.image_path
                ),
            });
        }
        items.push(Item {
            id: i as u64,
            image: img.window(r.y, r.x, r.h, r.w)?,
            label,
        });
    }
    Dataset::new("annotations", class_count, items)
}

// ---------------------------------------------------------------- folders

/// Loads `root/<label>/<image>.png`; labels are assigned in sorted folder order.
pub fn load_image_dir(root: &Path) -> Result<(Dataset, Vec<String>)> {
    let mut classes: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.len() < 2 {
        bail!(Config, "{} must contain at least two label folders", root.display());
    }
    let mut names = Vec::new();
    let mut items = Vec::new();
    for (label, dir) in classes.iter().enumerate() {
        names.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "png"))
            .collect();
        files.sort();
        for f in files {
            let image = ImageBuffer::load_png(&f)?;
            let id = items.len() as u64;
            items.push(Item { id, image, label });
        }
    }
    let name = root.file_name().unwrap_or_default().to_string_lossy().into_owned();
    Ok((Dataset::new(name, names.len(), items)?, names))
}

/// Writes `root/<label>/<id>.png` for every item.
pub fn save_image_dir(ds: &Dataset, root: &Path, class_names: &[String]) -> Result<()> {
    for (label, name) in class_names.iter().enumerate().take(ds.class_count) {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let _ = label;
    }
    for it in &ds.items {
        let path = root.join(&class_names[it.label]).join(format!("{:06}.png", it.id));
        it.image.save_png(&path)?;
    }
    Ok(())
}

/// Folder names `c00`, `c01`, ... for generated data.
pub fn default_class_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i:02}")).collect()
}

// ---------------------------------------------------------------- splits

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            fractions: (0.70, 0.15, 0.15),
            seed,
        }
    }
}

/// Sizes of the train / valid / test parts for `n` items.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        bail!(Argument, "split fractions must be non-negative and sum to 1, got {fractions:?}");
    }
    // small slack so exact products like 0.7 * 1000 are not floored below
    let train = ((a * n as f64) + 1e-9).floor() as usize;
    let valid = ((b * n as f64) + 1e-9).floor() as usize;
    Ok((train, valid, n - train - valid))
}

/// Seeded shuffle of item indices cut into train / valid / test. Labels are not read.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if n < 10 {
        bail!(Argument, "split needs at least 10 items, got {n}");
    }
    let (tr, va, _) = split_sizes(n, spec.fractions)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(spec.seed, &[tag::SPLIT]));
    let test = idx.split_off(tr + va);
    let valid = idx.split_off(tr);
    Ok((idx, valid, test))
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (tr, va, te) = split_indices(ds.len(), spec)?;
    Ok((
        ds.subset(&tr, &format!("{}/train", ds.name)),
        ds.subset(&va, &format!("{}/valid", ds.name)),
        ds.subset(&te, &format!("{}/test", ds.name)),
    ))
}

// ---------------------------------------------------------------- batches

/// Item indices for `n` anchor / positive / negative triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletBatch {
    pub anchor: Vec<usize>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl TripletBatch {
    /// All indices in block order: anchors, then positives, then negatives.
    pub fn blocks(&self) -> Vec<usize> {
        self.anchor
            .iter()
            .chain(&self.positive)
            .chain(&self.negative)
            .copied()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.anchor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor.is_empty()
    }
}

/// Precomputed class groups for triplet sampling.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    groups: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

impl TripletSampler {
    pub fn new(train: &Dataset) -> Result<Self> {
        let groups = train.by_class();
        let populated = groups.iter().filter(|g| !g.is_empty()).count();
        if populated < 2 {
            bail!(Argument, "triplet sampling needs at least two populated classes");
        }
        if let Some((c, g)) = groups.iter().enumerate().find(|(_, g)| g.len() == 1) {
            bail!(Argument, "class {c} has {} item; triplets need at least 2 per class", g.len());
        }
        Ok(TripletSampler {
            groups,
            labels: train.labels(),
        })
    }

    /// Uniform anchors; positive uniform over the anchor's class minus the
    /// anchor itself; negative uniform over items of any other class.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> TripletBatch {
        let total = self.labels.len();
        let mut batch = TripletBatch {
            anchor: Vec::with_capacity(n),
            positive: Vec::with_capacity(n),
            negative: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let a = rng.random_range(0..total);
            let label = self.labels[a];
            let group = &self.groups[label];
            let p = loop {
                let cand = *group.choose(rng).expect("class is populated");
                if cand != a {
                    break cand;
                }
            };
            let others = total - group.len();
            let mut k = rng.random_range(0..others);
            let mut q = 0;
            for (c, g) in self.groups.iter().enumerate() {
                if c == label {
                    continue;
                }
                if k < g.len() {
                    q = g[k];
                    break;
                }
                k -= g.len();
            }
            batch.anchor.push(a);
            batch.positive.push(p);
            batch.negative.push(q);
        }
        batch
    }
}

pub fn make_triplet_batch(train: &Dataset, n: usize, rng: &mut impl Rng) -> Result<TripletBatch> {
    Ok(TripletSampler::new(train)?.sample(n, rng))
}

/// Two augmented views per source image, interleaved `[a1, b1, a2, b2, ...]`.
#[derive(Debug, Clone)]
pub struct ContrastiveViews {
    pub views: Vec<ImageBuffer>,
    pub sources: Vec<usize>,
}

impl ContrastiveViews {
    pub fn partner(&self, i: usize) -> usize {
        i ^ 1
    }
}

/// Builds the view pairs for `sources`. View streams are keyed by
/// (source index, epoch, view slot), so the two views of a pair differ.
pub fn make_contrastive_batch(
    pool: &ImagePool<'_>,
    sources: &[usize],
    pipeline: &AugPipeline,
    epoch: u64,
) -> Result<ContrastiveViews> {
    if sources.len() < 2 {
        bail!(Argument, "contrastive batch needs n >= 2 source images, got {}", sources.len());
    }
    let mut views = Vec::with_capacity(sources.len() * 2);
    for &s in sources {
        if s >= pool.len() {
            bail!(Argument, "source index {s} outside pool of {}", pool.len());
        }
        for slot in 0..2u64 {
            views.push(pipeline.apply_stream(pool.get(s), &[tag::VIEW, s as u64, epoch, slot])?);
        }
    }
    Ok(ContrastiveViews {
        views,
        sources: sources.to_vec(),
    })
}

/// Samples `n` distinct sources uniformly, then builds their views.
pub fn sample_contrastive_batch(
    pool: &ImagePool<'_>,
    n: usize,
    pipeline: &AugPipeline,
    rng: &mut impl Rng,
    epoch: u64,
) -> Result<ContrastiveViews> {
    if n > pool.len() {
        bail!(Argument, "cannot draw {n} distinct sources from {}", pool.len());
    }
    let sources = rand::seq::index::sample(rng, pool.len(), n).into_vec();
    make_contrastive_batch(pool, &sources, pipeline, epoch)
}
