// SPDX-License-Identifier: Apache-2.0

use std::io::{BufRead};
use std::path::Path;

use crate::error::{bail, Error, Result};
use crate::numerics::Tensor;

/// H×W×C float image, row-major HWC. Values lie in [0,1] unless `normalized`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
    normalized: bool,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            bail!(Argument, "image dimensions must be >= 1, got {height}x{width}");
        }
        if channels != 1 && channels != 3 {
            bail!(Argument, "images have 1 or 3 channels, got {channels}");
        }
        if pixels.len() != height * width * channels {
            bail!(Dimension, "{height}x{width}x{channels} image needs {} values, got {}", height * width * channels, pixels.len());
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            pixels,
            normalized: false,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels]).expect("valid dims")
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, pixels).expect("valid dims")
    }

    pub(crate) fn with_pixels(&self, height: usize, width: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), height * width * self.channels);
        ImageBuffer {
            height,
            width,
            channels: self.channels,
            pixels,
            normalized: self.normalized,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn set_normalized(&mut self) {
        self.normalized = true;
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Sample with coordinates clamped to the border (replicate padding).
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize, c: usize) -> f64 {
        let yy = y.clamp(0, self.height as isize - 1) as usize;
        let xx = x.clamp(0, self.width as isize - 1) as usize;
        self.get(yy, xx, c)
    }

    /// Exact `h×w` window whose top-left corner is at (`top`, `left`).
    pub fn window(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            bail!(Argument, "window {h}x{w} at ({top},{left}) outside {}x{} image", self.height, self.width);
        }
        let mut pixels = Vec::with_capacity(h * w * self.channels);
        for y in top..top + h {
            let start = (y * self.width + left) * self.channels;
            pixels.extend_from_slice(&self.pixels[start..start + w * self.channels]);
        }
        Ok(self.with_pixels(h, w, pixels))
    }

    /// Replicates a single channel into three.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer {
            height: self.height,
            width: self.width,
            channels: 3,
            pixels,
            normalized: self.normalized,
        }
    }

    /// C×H×W planes, the layout the network consumes.
    pub fn to_chw(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * self.channels];
        for (i, px) in self.pixels.chunks(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }

    /// Stable 64-bit fingerprint of the pixel bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.pixels {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        let channels = if img.color().has_color() { 3 } else { 1 };
        let (w, h, raw) = if channels == 3 {
            let rgb = img.to_rgb8();
            (rgb.width(), rgb.height(), rgb.into_raw())
        } else {
            let g = img.to_luma8();
            (g.width(), g.height(), g.into_raw())
        };
        let pixels = raw.into_iter().map(|b| b as f64 / 255.0).collect();
        Self::new(h as usize, w as usize, channels, pixels)
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.normalized {
            bail!(State, "cannot encode a normalized image");
        }
        Ok(self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color)?;
        Ok(())
    }

    /// Reads binary (P5) or ASCII (P2) 8-bit PGM.
    pub fn read_pgm(r: &mut impl BufRead) -> Result<Self> {
        let mut data = Vec::new();
        r.read_to_end(&mut data).map_err(|e| Error::Parse(format!("pgm: {e}")))?;
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < data.len() && data[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < data.len() && data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                bail!(Parse, "pgm: unexpected end of header");
            }
            Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
        };
        let magic = token()?;
        let num = |s: String| s.parse::<usize>().map_err(|_| Error::Parse(format!("pgm: bad number {s:?}")));
        let w = num(token()?)?;
        let h = num(token()?)?;
        let maxval = num(token()?)?;
        if maxval == 0 || maxval > 255 {
            bail!(Parse, "pgm: only 8-bit files are supported");
        }
        let pixels: Vec<f64> = match magic.as_str() {
            "P2" => (0..w * h)
                .map(|_| token().and_then(num).map(|v| v as f64 / maxval as f64))
                .collect::<Result<_>>()?,
            "P5" => {
                let body = pos + 1;
                if data.len() < body + w * h {
                    bail!(Parse, "pgm: truncated pixel data");
                }
                data[body..body + w * h].iter().map(|&b| b as f64 / maxval as f64).collect()
            }
            other => bail!(Parse, "pgm: unsupported magic {other:?}"),
        };
        Self::new(h, w, 1, pixels)
    }

    /// Writes binary P5; colour images are written as their luma.
    pub fn write_pgm(&self) -> Result<Vec<u8>> {
        let gray = if self.channels == 3 { super::ops::gray(self) } else { self.clone() };
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        let bytes = gray.to_bytes()?;
        out.extend(bytes.chunks(gray.channels).map(|c| c[0]));
        Ok(out)
    }
}

/// Stacks equally sized images into an N×C×H×W tensor.
pub fn images_to_tensor(images: &[ImageBuffer]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        bail!(Argument, "cannot batch zero images");
    };
    let (h, w, c) = (first.height, first.width, first.channels);
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        if (img.height, img.width, img.channels) != (h, w, c) {
            bail!(Dimension, "batch mixes {}x{}x{} with {h}x{w}x{c}", img.height, img.width, img.channels);
        }
        data.extend(img.to_chw());
    }
    Tensor::from_vec(&[images.len(), c, h, w], data)
}
