// SPDX-License-Identifier: Apache-2.0

//! Embedding export and the t-SNE scatter outputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::augment::Geometry;
use crate::data::Dataset;
use crate::error::{bail, Error, Result};
use crate::numerics::resnet::ClassifierInput;
use crate::numerics::{MicroResNet, Tensor};
use crate::rng::{self, tag};
use crate::trainer::EvalSet;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<u64>,
    pub labels: Vec<usize>,
    /// One row per id.
    pub values: Tensor,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn to_csv(&self) -> Result<String> {
        let dim = self.values.dim(1);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..dim).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for (i, (id, label)) in self.ids.iter().zip(&self.labels).enumerate() {
            let mut rec = vec![id.to_string(), label.to_string()];
            // shortest round-trip representation keeps values exact
            rec.extend(self.values.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
            bail!(Parse, "embedding CSV must start with id,label and at least one value column");
        }
        let dim = header.len() - 2;
        let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |k: usize| -> Result<&str> {
                rec.get(k).ok_or_else(|| Error::Record {
                    line,
                    reason: format!("expected {} fields, got {}", dim + 2, rec.len()),
                })
            };
            let bad = |what: &str| Error::Record {
                line,
                reason: format!("invalid {what}"),
            };
            ids.push(field(0)?.trim().parse().map_err(|_| bad("id"))?);
            labels.push(field(1)?.trim().parse().map_err(|_| bad("label"))?);
            for k in 0..dim {
                values.push(field(k + 2)?.trim().parse::<f64>().map_err(|_| bad("value"))?);
            }
        }
        let n = ids.len();
        Ok(EmbeddingTable {
            ids,
            labels,
            values: Tensor::from_vec(&[n, dim], values)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Representation fed to the classifier: the projection output when the
/// classifier reads it, otherwise the pooled backbone features.
pub fn classifier_input(model: &MicroResNet, x: &Tensor) -> Result<Tensor> {
    let out = model.infer(x)?;
    match model.architecture().classifier {
        Some(spec) if spec.input == ClassifierInput::Embedding => {
            Ok(out.embedding.expect("classifier on embedding implies a head"))
        }
        _ => Ok(out.features),
    }
}

/// Seeded uniform sample of `sample_n` items, ordered by id, embedded under
/// the eval pipeline.
pub fn export_embeddings(
    model: &MicroResNet,
    split: &Dataset,
    geom: &Geometry,
    sample_n: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if sample_n > split.len() {
        bail!(Argument, "sample of {sample_n} exceeds the {} items in the split", split.len());
    }
    let mut picked = rand::seq::index::sample(&mut rng::stream(seed, &[tag::SAMPLE]), split.len(), sample_n).into_vec();
    picked.sort_by_key(|&i| split.items[i].id);
    let subset = split.subset(&picked, "sample");
    let set = EvalSet::new(&subset, geom, geom.crop_side)?;
    let mut parts = Vec::new();
    let rows: Vec<usize> = (0..subset.len()).collect();
    for chunk in rows.chunks(64) {
        let x = set.inputs.select_rows(chunk);
        parts.push(classifier_input(model, &x)?);
    }
    let values = if parts.is_empty() {
        Tensor::zeros(&[0, model.feature_dim()])
    } else {
        Tensor::concat_rows(&parts.iter().collect::<Vec<_>>())?
    };
    Ok(EmbeddingTable {
        ids: subset.items.iter().map(|it| it.id).collect(),
        labels: subset.labels(),
        values,
    })
}

/// `id,label,x,y` rows.
pub fn layout_csv(ids: &[u64], labels: &[usize], points: &Tensor) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "label", "x", "y"])?;
    for (i, (id, l)) in ids.iter().zip(labels).enumerate() {
        let p = points.row(i);
        w.write_record([id.to_string(), l.to_string(), format!("{:?}", p[0]), format!("{:?}", p[1])])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn label_color(label: usize) -> String {
    match PALETTE.get(label) {
        Some(c) => c.to_string(),
        None => format!("hsl({},65%,45%)", (label * 137) % 360),
    }
}

/// Scatter plot with one colour per label and a legend.
pub fn scatter_svg(labels: &[usize], points: &Tensor, size: f64) -> String {
    let n = labels.len();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let p = points.row(i);
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let margin = 20.0;
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let scale = (size - 2.0 * margin) / span;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for i in 0..n {
        let p = points.row(i);
        let cx = margin + (p[0] - x0) * scale;
        let cy = size - margin - (p[1] - y0) * scale;
        let _ = writeln!(
            s,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            label_color(labels[i])
        );
    }
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    for (k, l) in distinct.iter().enumerate() {
        let y = 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            "<circle cx=\"8\" cy=\"{:.1}\" r=\"4\" fill=\"{}\"/><text x=\"16\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\">{l}</text>",
            y - 4.0,
            label_color(*l),
            y
        );
    }
    s.push_str("</svg>\n");
    s
}
