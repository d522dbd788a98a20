// SPDX-License-Identifier: Apache-2.0

//! Pure image primitives. Randomised ops come in two flavours: a sampling
//! wrapper that takes an RNG and a `*_with` function that takes the sampled
//! parameters explicitly.

use rand::seq::SliceRandom;
use rand::Rng;

use super::image::ImageBuffer;
use crate::error::{bail, Result};

pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Bilinear resize to `side`×`side` with corner-aligned sampling.
pub fn resize(img: &ImageBuffer, side: usize) -> Result<ImageBuffer> {
    resize_to(img, side, side)
}

fn src_coord(dst: usize, dst_len: usize, src_len: usize) -> f64 {
    if dst_len == 1 {
        (src_len as f64 - 1.0) / 2.0
    } else {
        dst as f64 * (src_len as f64 - 1.0) / (dst_len as f64 - 1.0)
    }
}

pub fn resize_to(img: &ImageBuffer, height: usize, width: usize) -> Result<ImageBuffer> {
    if height == 0 || width == 0 {
        bail!(Argument, "resize target must be >= 1");
    }
    if height == img.height() && width == img.width() {
        return Ok(img.clone());
    }
    let c = img.channels();
    let mut out = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let sy = src_coord(y, height, img.height());
        for x in 0..width {
            let sx = src_coord(x, width, img.width());
            for ch in 0..c {
                out.push(bilinear(img, sy, sx, ch));
            }
        }
    }
    Ok(img.with_pixels(height, width, out))
}

/// Bilinear sample at fractional (y, x) with replicate border.
#[inline]
pub(crate) fn bilinear(img: &ImageBuffer, y: f64, x: f64, c: usize) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let v00 = img.get_clamped(y0, x0, c);
    let v01 = img.get_clamped(y0, x0 + 1, c);
    let v10 = img.get_clamped(y0 + 1, x0, c);
    let v11 = img.get_clamped(y0 + 1, x0 + 1, c);
    let top = v00 + (v01 - v00) * fx;
    let bottom = v10 + (v11 - v10) * fx;
    top + (bottom - top) * fy
}

fn check_crop(img: &ImageBuffer, side: usize) -> Result<()> {
    if side == 0 || side > img.height() || side > img.width() {
        bail!(Argument, "crop side {side} does not fit a {}x{} image", img.height(), img.width());
    }
    Ok(())
}

/// Square crop at a uniformly random valid offset.
pub fn random_crop(img: &ImageBuffer, side: usize, rng: &mut impl Rng) -> Result<ImageBuffer> {
    check_crop(img, side)?;
    let top = rng.random_range(0..=img.height() - side);
    let left = rng.random_range(0..=img.width() - side);
    img.window(top, left, side, side)
}

pub fn center_crop(img: &ImageBuffer, side: usize) -> Result<ImageBuffer> {
    check_crop(img, side)?;
    img.window((img.height() - side) / 2, (img.width() - side) / 2, side, side)
}

/// Crop side that keeps at least `min_area_fraction` of a `resize_side` square.
pub fn simclr_crop_side(resize_side: usize, min_area_fraction: f64) -> Result<usize> {
    if !(min_area_fraction > 0.0 && min_area_fraction <= 1.0) {
        bail!(Argument, "area fraction must be in (0, 1], got {min_area_fraction}");
    }
    Ok((resize_side as f64 * min_area_fraction.sqrt()).round() as usize)
}

pub fn hflip(img: &ImageBuffer) -> ImageBuffer {
    let (w, c) = (img.width(), img.channels());
    let mut out = Vec::with_capacity(img.pixels().len());
    for row in img.pixels().chunks(w * c) {
        for px in row.chunks(c).rev() {
            out.extend_from_slice(px);
        }
    }
    img.with_pixels(img.height(), w, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphKind {
    Erosion,
    Dilation,
}

/// Sliding-window min (erosion) or max (dilation) per channel over a
/// `kernel_w`×`kernel_h` rectangle, replicate border. Implemented as two 1-d passes.
pub fn morphology(img: &ImageBuffer, kind: MorphKind, kernel_w: usize, kernel_h: usize) -> Result<ImageBuffer> {
    if kernel_w % 2 == 0 || kernel_h % 2 == 0 {
        bail!(Argument, "morphology kernel must have odd dimensions, got {kernel_w}x{kernel_h}");
    }
    let pick = match kind {
        MorphKind::Erosion => f64::min,
        MorphKind::Dilation => f64::max,
    };
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (rx, ry) = ((kernel_w / 2) as isize, (kernel_h / 2) as isize);
    let mut tmp = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = img.get(y, x, ch);
                for dx in -rx..=rx {
                    acc = pick(acc, img.get_clamped(y as isize, x as isize + dx, ch));
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let pass = img.with_pixels(h, w, tmp);
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = pass.get(y, x, ch);
                for dy in -ry..=ry {
                    acc = pick(acc, pass.get_clamped(y as isize + dy, x as isize, ch));
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    Ok(img.with_pixels(h, w, out))
}

/// Concrete parameters of one affine draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    /// Translation in pixels.
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    pub angle_deg: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        shift_x: 0.0,
        shift_y: 0.0,
        scale: 1.0,
        angle_deg: 0.0,
    };
}

pub fn sample_affine(
    img: &ImageBuffer,
    shift_limit: f64,
    scale_limit: f64,
    rotate_limit: f64,
    rng: &mut impl Rng,
) -> AffineParams {
    let mut sym = |lim: f64| if lim > 0.0 { rng.random_range(-lim..=lim) } else { 0.0 };
    let fx = sym(shift_limit);
    let fy = sym(shift_limit);
    let ds = sym(scale_limit);
    let angle = sym(rotate_limit);
    AffineParams {
        shift_x: fx * img.width() as f64,
        shift_y: fy * img.height() as f64,
        scale: 1.0 + ds,
        angle_deg: angle,
    }
}

pub fn affine(
    img: &ImageBuffer,
    shift_limit: f64,
    scale_limit: f64,
    rotate_limit: f64,
    rng: &mut impl Rng,
) -> Result<ImageBuffer> {
    if shift_limit < 0.0 || scale_limit < 0.0 || rotate_limit < 0.0 || scale_limit >= 1.0 {
        bail!(Argument, "affine limits must be non-negative (scale limit < 1)");
    }
    let p = sample_affine(img, shift_limit, scale_limit, rotate_limit, rng);
    Ok(affine_with(img, p))
}

/// Scales and rotates about the image centre, then translates; output pixels
/// are inverse-mapped and bilinearly sampled with replicate border.
pub fn affine_with(img: &ImageBuffer, p: AffineParams) -> ImageBuffer {
    if p == AffineParams::IDENTITY {
        return img.clone();
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let theta = p.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - p.shift_x;
            let dy = y as f64 - cy - p.shift_y;
            // inverse rotation then inverse scale
            let sx = (cos * dx + sin * dy) / p.scale + cx;
            let sy = (-sin * dx + cos * dy) / p.scale + cy;
            for ch in 0..c {
                out.push(bilinear(img, sy, sx, ch).clamp(0.0, 1.0));
            }
        }
    }
    img.with_pixels(h, w, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterRanges {
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub saturation: (f64, f64),
    pub hue: (f64, f64),
}

impl Default for JitterRanges {
    fn default() -> Self {
        JitterRanges {
            brightness: (0.8, 1.0),
            contrast: (0.8, 1.0),
            saturation: (0.8, 1.0),
            hue: (-0.5, 0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JitterStep {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

/// Sampled colour-jitter factors plus the order the four adjustments run in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue rotation in turns.
    pub hue: f64,
    pub order: [JitterStep; 4],
}

impl JitterFactors {
    pub const NEUTRAL: JitterFactors = JitterFactors {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue: 0.0,
        order: [JitterStep::Brightness, JitterStep::Contrast, JitterStep::Saturation, JitterStep::Hue],
    };
}

fn uniform(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..=range.1)
    } else {
        range.0
    }
}

pub fn sample_jitter(r: &JitterRanges, rng: &mut impl Rng) -> JitterFactors {
    let mut order = JitterFactors::NEUTRAL.order;
    order.shuffle(rng);
    JitterFactors {
        brightness: uniform(r.brightness, rng),
        contrast: uniform(r.contrast, rng),
        saturation: uniform(r.saturation, rng),
        hue: uniform(r.hue, rng),
        order,
    }
}

pub fn colorjitter(img: &ImageBuffer, ranges: &JitterRanges, rng: &mut impl Rng) -> ImageBuffer {
    let f = sample_jitter(ranges, rng);
    colorjitter_with(img, &f)
}

fn luma_of(px: &[f64]) -> f64 {
    if px.len() == 3 {
        LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]
    } else {
        px[0]
    }
}

/// Applies the four adjustments in `f.order`, clamping to [0,1] after each.
/// Single-channel images behave as three equal channels: hue and saturation
/// leave them unchanged.
pub fn colorjitter_with(img: &ImageBuffer, f: &JitterFactors) -> ImageBuffer {
    let c = img.channels();
    let mut px = img.pixels().to_vec();
    for step in f.order {
        match step {
            JitterStep::Brightness => {
                if f.brightness != 1.0 {
                    px.iter_mut().for_each(|v| *v = (*v * f.brightness).clamp(0.0, 1.0));
                }
            }
            JitterStep::Contrast => {
                if f.contrast != 1.0 {
                    let n = (px.len() / c) as f64;
                    let mean = px.chunks(c).map(luma_of).sum::<f64>() / n;
                    px.iter_mut()
                        .for_each(|v| *v = (mean + f.contrast * (*v - mean)).clamp(0.0, 1.0));
                }
            }
            JitterStep::Saturation => {
                if f.saturation != 1.0 && c == 3 {
                    for p in px.chunks_mut(3) {
                        let g = luma_of(p);
                        for v in p.iter_mut() {
                            *v = (g + f.saturation * (*v - g)).clamp(0.0, 1.0);
                        }
                    }
                }
            }
            JitterStep::Hue => {
                if f.hue != 0.0 && c == 3 {
                    for p in px.chunks_mut(3) {
                        let (h, s, v) = rgb_to_hsv(p[0], p[1], p[2]);
                        if s == 0.0 {
                            continue;
                        }
                        let (r, g, b) = hsv_to_rgb((h + f.hue).rem_euclid(1.0), s, v);
                        p[0] = r.clamp(0.0, 1.0);
                        p[1] = g.clamp(0.0, 1.0);
                        p[2] = b.clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    img.with_pixels(img.height(), img.width(), px)
}

/// Hue in turns [0,1), saturation and value in [0,1].
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    if d == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    (h / 6.0, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Sigma used when the configured sigma is 0.
pub fn default_sigma(kernel_size: usize) -> f64 {
    0.3 * ((kernel_size as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalised 1-d Gaussian taps of odd length `k`.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f64> {
    let sigma = if sigma > 0.0 { sigma } else { default_sigma(k) };
    let r = (k / 2) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Draws a kernel size from `[lo, hi]`; even draws round up to the next odd size.
pub fn sample_blur_size(limit: (usize, usize), rng: &mut impl Rng) -> usize {
    let k = if limit.1 > limit.0 {
        rng.random_range(limit.0..=limit.1)
    } else {
        limit.0
    };
    if k % 2 == 0 {
        k + 1
    } else {
        k
    }
}

pub fn gaussian_blur(img: &ImageBuffer, blur_limit: (usize, usize), sigma: f64, rng: &mut impl Rng) -> Result<ImageBuffer> {
    if blur_limit.0 == 0 || blur_limit.0 > blur_limit.1 {
        bail!(Argument, "blur limit must satisfy 1 <= lo <= hi, got {blur_limit:?}");
    }
    let k = sample_blur_size(blur_limit, rng);
    gaussian_blur_with(img, k, sigma)
}

/// Separable Gaussian convolution with replicate border.
pub fn gaussian_blur_with(img: &ImageBuffer, kernel_size: usize, sigma: f64) -> Result<ImageBuffer> {
    if kernel_size % 2 == 0 {
        bail!(Argument, "blur kernel size must be odd, got {kernel_size}");
    }
    if kernel_size == 1 {
        return Ok(img.clone());
    }
    let taps = gaussian_kernel(kernel_size, sigma);
    let r = (kernel_size / 2) as isize;
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut tmp = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    acc += t * img.get_clamped(y as isize, x as isize + i as isize - r, ch);
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let pass = img.with_pixels(h, w, tmp);
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    acc += t * pass.get_clamped(y as isize + i as isize - r, x as isize, ch);
                }
                out[(y * w + x) * c + ch] = if img.is_normalized() { acc } else { acc.clamp(0.0, 1.0) };
            }
        }
    }
    Ok(img.with_pixels(h, w, out))
}

pub fn invert(img: &ImageBuffer) -> ImageBuffer {
    let px = img.pixels().iter().map(|v| 1.0 - v).collect();
    img.with_pixels(img.height(), img.width(), px)
}

/// BT.601 luma replicated to every channel.
pub fn gray(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let px = img
        .pixels()
        .chunks(3)
        .flat_map(|p| {
            let l = luma_of(p).clamp(0.0, 1.0);
            [l, l, l]
        })
        .collect();
    img.with_pixels(img.height(), img.width(), px)
}

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

pub fn normalize(img: &ImageBuffer, mean: &[f64], std: &[f64]) -> Result<ImageBuffer> {
    if img.is_normalized() {
        bail!(State, "image is already normalized");
    }
    let c = img.channels();
    if mean.len() != c || std.len() != c {
        bail!(Argument, "normalize needs {c} mean/std values, got {}/{}", mean.len(), std.len());
    }
    if std.iter().any(|&s| s <= 0.0) {
        bail!(Argument, "normalize std must be positive");
    }
    let px = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % c]) / std[i % c])
        .collect();
    let mut out = img.with_pixels(img.height(), img.width(), px);
    out.set_normalized();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(h: usize, w: usize, c: usize) -> ImageBuffer {
        ImageBuffer::from_fn(h, w, c, |y, x, ch| ((y * w + x) * c + ch) as f64 / (h * w * c) as f64)
    }

    #[test]
    fn resize_examples() {
        let img = ramp(5, 7, 3);
        assert_eq!(resize_to(&img, 5, 7).unwrap(), img);
        let k = ImageBuffer::filled(2, 2, 1, 0.7);
        assert!(resize(&k, 4).unwrap().pixels().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        // corner-aligned: samples at 0, 1/3, 2/3, 1
        let line = ImageBuffer::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let out = resize_to(&line, 1, 4).unwrap();
        let expect = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (a, b) in out.pixels().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn crop_area_and_identity() {
        let frac = (224.0f64 / 256.0).powi(2);
        assert!((frac - 0.765625).abs() < 1e-12);
        let img = ramp(6, 6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_crop(&img, 6, &mut rng).unwrap(), img);
        assert!(random_crop(&img, 7, &mut rng).is_err());
        let c = random_crop(&img, 3, &mut rng).unwrap();
        // locate the window by its first pixel; the whole window must match
        let first = c.get(0, 0, 0);
        let idx = img.pixels().iter().position(|&v| v == first).unwrap();
        let (top, left) = (idx / 6, idx % 6);
        assert_eq!(img.window(top, left, 3, 3).unwrap(), c);
    }

    #[test]
    fn simclr_crop_sides() {
        assert_eq!(simclr_crop_side(256, 0.60).unwrap(), 198);
        assert_eq!(simclr_crop_side(256, 1.0).unwrap(), 256);
        assert_eq!(simclr_crop_side(96, 0.60).unwrap(), 74);
        assert!(simclr_crop_side(96, 0.0).is_err());
    }

    #[test]
    fn hflip_examples() {
        let img = ImageBuffer::new(1, 2, 1, vec![0.2, 0.9]).unwrap();
        assert_eq!(hflip(&img).pixels(), &[0.9, 0.2]);
        let sym = ImageBuffer::new(1, 3, 1, vec![0.1, 0.5, 0.1]).unwrap();
        assert_eq!(hflip(&sym), sym);
    }

    #[test]
    fn dilation_grows_single_pixel() {
        let img = ImageBuffer::from_fn(5, 5, 1, |y, x, _| if (y, x) == (2, 2) { 1.0 } else { 0.0 });
        let d = morphology(&img, MorphKind::Dilation, 3, 3).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let inside = (1..=3).contains(&y) && (1..=3).contains(&x);
                assert_eq!(d.get(y, x, 0), if inside { 1.0 } else { 0.0 });
            }
        }
        assert!(morphology(&img, MorphKind::Erosion, 4, 3).is_err());
    }

    #[test]
    fn affine_integer_shift() {
        let img = ramp(9, 9, 1);
        let p = AffineParams { shift_x: 2.0, ..AffineParams::IDENTITY };
        let out = affine_with(&img, p);
        for y in 0..9 {
            for x in 2..9 {
                assert!((out.get(y, x, 0) - img.get(y, x - 2, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jitter_brightness_half() {
        let img = ImageBuffer::filled(3, 3, 3, 0.8);
        let f = JitterFactors { brightness: 0.5, ..JitterFactors::NEUTRAL };
        assert!(colorjitter_with(&img, &f).pixels().iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2, 0.4, 0.9), (1.0, 0.0, 0.0), (0.3, 0.3, 0.1), (0.0, 0.5, 0.5)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_impulse_response_is_kernel() {
        let img = ImageBuffer::from_fn(9, 9, 1, |y, x, _| if (y, x) == (4, 4) { 1.0 } else { 0.0 });
        let out = gaussian_blur_with(&img, 5, 0.0).unwrap();
        let k = gaussian_kernel(5, 0.0);
        for y in 0..9 {
            for x in 0..9 {
                let expect = if (2..=6).contains(&y) && (2..=6).contains(&x) { k[y - 2] * k[x - 2] } else { 0.0 };
                assert!((out.get(y, x, 0) - expect).abs() < 1e-15);
            }
        }
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((default_sigma(7) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn blur_size_sampling_rounds_even_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let k = sample_blur_size((3, 7), &mut rng);
            assert!(k % 2 == 1 && (3..=7).contains(&k));
        }
        assert_eq!(gaussian_blur_with(&ramp(3, 3, 1), 1, 0.0).unwrap(), ramp(3, 3, 1));
    }

    #[test]
    fn normalize_imagenet_constants() {
        let img = ImageBuffer::new(1, 1, 3, vec![0.485, 0.456, 0.406]).unwrap();
        let n = normalize(&img, &IMAGENET_MEAN, &IMAGENET_STD).unwrap();
        assert!(n.pixels().iter().all(|v| v.abs() < 1e-15));
        assert!(n.is_normalized());
        assert!(matches!(normalize(&n, &IMAGENET_MEAN, &IMAGENET_STD), Err(crate::Error::State(_))));
    }
}
