// SPDX-License-Identifier: Apache-2.0

//! Binary checkpoint format.
//!
//! ```text
//! GSLAB1\n
//! meta <architecture json>\n
//! params <count>\n
//! <name> <shape: d0xd1x...>\n      (one per parameter)
//! end\n
//! <little-endian f64 data, parameters in manifest order>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::resnet::{Architecture, MicroResNet};
use super::tensor::Tensor;
use crate::error::{bail, Error, Result};

pub const MAGIC: &str = "GSLAB1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &MicroResNet) -> Self {
        Checkpoint {
            architecture: model.architecture().clone(),
            params: model
                .store()
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Rebuilds the model the checkpoint was taken from.
    pub fn to_model(&self) -> Result<MicroResNet> {
        let mut m = MicroResNet::with_architecture(&self.architecture, &mut ChaCha8Rng::seed_from_u64(0))?;
        m.load_values(self.params.iter().map(|(n, t)| (n.as_str(), t)))?;
        Ok(m)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        let meta = serde_json::to_string(&self.architecture).map_err(std::io::Error::other)?;
        writeln!(w, "meta {meta}")?;
        writeln!(w, "params {}", self.params.len())?;
        for (name, t) in &self.params {
            let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            writeln!(w, "{name} {}", shape.join("x"))?;
        }
        writeln!(w, "end")?;
        for (_, t) in &self.params {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        let mut next_line = |r: &mut dyn BufRead| -> Result<String> {
            line.clear();
            let n = r.read_line(&mut line).map_err(|e| Error::Load(e.to_string()))?;
            if n == 0 {
                bail!(Load, "unexpected end of checkpoint header");
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(r)? != MAGIC {
            bail!(Load, "missing {MAGIC} magic");
        }
        let meta = next_line(r)?;
        let Some(json) = meta.strip_prefix("meta ") else {
            bail!(Load, "expected meta line");
        };
        let architecture: Architecture =
            serde_json::from_str(json).map_err(|e| Error::Load(format!("bad meta: {e}")))?;
        let count_line = next_line(r)?;
        let count: usize = count_line
            .strip_prefix("params ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::Load(format!("bad params line {count_line:?}")))?;
        let mut manifest = Vec::with_capacity(count);
        for _ in 0..count {
            let entry = next_line(r)?;
            let Some((name, shape)) = entry.rsplit_once(' ') else {
                bail!(Load, "bad manifest entry {entry:?}");
            };
            let dims: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Load(format!("bad shape in {entry:?}")))?;
            manifest.push((name.to_string(), dims));
        }
        if next_line(r)? != "end" {
            bail!(Load, "manifest not terminated by 'end'");
        }
        let mut params = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for (name, dims) in manifest {
            let n: usize = dims.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Load(format!("truncated data for {name}")))?;
                data.push(f64::from_le_bytes(buf));
            }
            params.push((name, Tensor::from_vec(&dims, data)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::Load(e.to_string()))? != 0 {
            bail!(Load, "trailing bytes after parameter data");
        }
        Ok(Checkpoint {
            architecture,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::resnet::{ClassifierInput, ClassifierSpec, ModelConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = MicroResNet::new(ModelConfig { in_channels: 1, widths: vec![4, 6], input_side: 8 }, &mut rng).unwrap();
        m.attach_triplet_head(5, &mut rng).unwrap();
        m.attach_classifier(ClassifierSpec { classes: 3, input: ClassifierInput::Embedding }, &mut rng).unwrap();
        let ck = Checkpoint::from_model(&m);
        let bytes = ck.to_bytes();
        assert!(bytes.starts_with(b"GSLAB1\n"));
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let m2 = back.to_model().unwrap();
        assert_eq!(m2.store().iter().map(|p| &p.value).collect::<Vec<_>>(), m.store().iter().map(|p| &p.value).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_file_is_load_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MicroResNet::new(ModelConfig { in_channels: 1, widths: vec![2], input_side: 8 }, &mut rng).unwrap();
        let bytes = Checkpoint::from_model(&m).to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(Checkpoint::read_from(&mut &cut[..]), Err(Error::Load(_))));
        assert!(matches!(Checkpoint::read_from(&mut &b"NOPE\n"[..]), Err(Error::Load(_))));
    }
}
