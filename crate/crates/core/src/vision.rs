//! Camera frame preprocessing and moving-object extraction.
//!
//! The foreground pipeline runs in a fixed order: crop, mixture-of-Gaussians
//! background subtraction, 3x3 opening, then connected-component blob
//! analysis. Closing and hole filling are intentionally absent.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scalar::Scalar;
use crate::types::Rect;

/// Row-major grey-level image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T = f64> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> GrayImage<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if width * height != pixels.len() {
            return param(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            ));
        }
        if pixels
            .iter()
            .any(|p| !p.is_finite() || *p < T::zero() || *p > T::one())
        {
            return param("pixel values must be finite and within [0, 1]");
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        let value = value.max(T::zero()).min(T::one());
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).max(T::zero()).min(T::one()));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.pixels[y * self.width + x] = v.max(T::zero()).min(T::one());
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> T {
        if self.pixels.is_empty() {
            return T::zero();
        }
        self.pixels.iter().copied().sum::<T>() / T::from_usize_lossy(self.pixels.len())
    }
}

/// Binary image, `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return param("mask size does not match dimensions");
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn fill_rect(&mut self, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                self.set(x, y, true);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur<T: Scalar>(img: &GrayImage<T>, sigma: f64) -> Result<Vec<T>> {
    if !(sigma > 0.0) {
        return param(format!("sigma must be positive, got {sigma}"));
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
    let src: Vec<f64> = img.pixels.iter().map(|p| p.as_f64()).collect();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src[(y * w) as usize + clamp(x + i as isize - r, w)];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![T::zero(); src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[clamp(y + i as isize - r, h) * w as usize + x as usize];
            }
            out[(y * w + x) as usize] = T::lit(acc);
        }
    }
    Ok(out)
}

/// Divides out a Gaussian-smoothed shading estimate, keeping the mean level.
pub fn flat_field_correct<T: Scalar>(img: &GrayImage<T>, sigma: f64) -> Result<GrayImage<T>> {
    let shading = gaussian_blur(img, sigma)?;
    let eps = T::lit(1e-6);
    let raw: Vec<T> = img
        .pixels
        .iter()
        .zip(&shading)
        .map(|(p, s)| *p / s.max(eps))
        .collect();
    let raw_mean = raw.iter().copied().sum::<T>() / T::from_usize_lossy(raw.len().max(1));
    let scale = if raw_mean > T::zero() {
        img.mean() / raw_mean
    } else {
        T::zero()
    };
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        pixels: raw
            .into_iter()
            .map(|v| (v * scale).max(T::zero()).min(T::one()))
            .collect(),
    })
}

/// Linear-interpolated percentile of an already sorted slice, `q` in `[0, 1]`.
pub(crate) fn sorted_percentile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Maps the 1st percentile to 0 and the 99th to 1, saturating the tails.
pub fn contrast_stretch<T: Scalar>(img: &GrayImage<T>) -> GrayImage<T> {
    if img.pixels.is_empty() {
        return img.clone();
    }
    let mut sorted = img.pixels.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite pixels"));
    let lo = sorted_percentile(&sorted, 0.01);
    let hi = sorted_percentile(&sorted, 0.99);
    if hi <= lo {
        return img.clone();
    }
    let span = hi - lo;
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img
            .pixels
            .iter()
            .map(|p| ((*p - lo) / span).max(T::zero()).min(T::one()))
            .collect(),
    }
}

/// Pixel rectangle used to cut the sky region out of a camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    /// The fish-eye trim: a 1280x768 frame cut to the central 1024x384 sky band.
    pub const FISHEYE_SKY: CropRect = CropRect {
        x: 128,
        y: 0,
        width: 1024,
        height: 384,
    };
}

pub fn crop<T: Scalar>(img: &GrayImage<T>, rect: CropRect) -> Result<GrayImage<T>> {
    if rect.width == 0
        || rect.height == 0
        || rect.x + rect.width > img.width
        || rect.y + rect.height > img.height
    {
        return param(format!(
            "crop {rect:?} does not fit a {}x{} image",
            img.width, img.height
        ));
    }
    let mut pixels = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y..rect.y + rect.height {
        pixels.extend_from_slice(&img.row(y)[rect.x..rect.x + rect.width]);
    }
    Ok(GrayImage {
        width: rect.width,
        height: rect.height,
        pixels,
    })
}

/// Top half of the frame (the sky above the horizon).
pub fn crop_upper_half<T: Scalar>(img: &GrayImage<T>) -> Result<GrayImage<T>> {
    if !img.height.is_multiple_of(2) {
        return param(format!("height {} is odd", img.height));
    }
    crop(
        img,
        CropRect {
            x: 0,
            y: 0,
            width: img.width,
            height: img.height / 2,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub num_modes: usize,
    pub learning_rate: f64,
    pub background_threshold: f64,
    pub training_frames: usize,
    /// Match radius in standard deviations.
    pub match_distance: f64,
    pub initial_variance: f64,
    /// Lower bound on mode variance so a perfectly static scene does not
    /// collapse a mode to zero width.
    pub min_variance: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            num_modes: 5,
            learning_rate: 0.05,
            background_threshold: 0.85,
            training_frames: 10,
            match_distance: 2.5,
            initial_variance: 0.01,
            min_variance: 1e-4,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_modes == 0 {
            return param("num_modes must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return param("learning_rate must be in (0, 1)");
        }
        if !(self.background_threshold > 0.0 && self.background_threshold < 1.0) {
            return param("background_threshold must be in (0, 1)");
        }
        if !(self.match_distance > 0.0 && self.initial_variance > 0.0 && self.min_variance > 0.0) {
            return param("match distance and variances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMode<T> {
    pub weight: T,
    pub mean: T,
    pub variance: T,
}

/// Per-pixel mixture of Gaussians over intensity.
#[derive(Debug, Clone)]
pub struct GmmModel<T = f64> {
    width: usize,
    height: usize,
    cfg: GmmConfig,
    modes: Vec<GaussianMode<T>>,
    frames_seen: usize,
}

impl<T: Scalar> GmmModel<T> {
    pub fn new(width: usize, height: usize, cfg: GmmConfig) -> Result<Self> {
        cfg.validate()?;
        let empty = GaussianMode {
            weight: T::zero(),
            mean: T::zero(),
            variance: T::lit(cfg.initial_variance),
        };
        Ok(GmmModel {
            width,
            height,
            cfg,
            modes: vec![empty; width * height * cfg.num_modes],
            frames_seen: 0,
        })
    }

    pub fn config(&self) -> &GmmConfig {
        &self.cfg
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn pixel_modes(&self, x: usize, y: usize) -> &[GaussianMode<T>] {
        let k = self.cfg.num_modes;
        let i = (y * self.width + x) * k;
        &self.modes[i..i + k]
    }

    /// Classifies `frame` against the current background, then learns from it.
    /// The mask stays empty while the model is still in its training frames.
    pub fn apply(&mut self, frame: &GrayImage<T>) -> Result<Mask> {
        if (frame.width, frame.height) != (self.width, self.height) {
            return Err(Error::Dimensions {
                expected: (self.width, self.height),
                got: (frame.width, frame.height),
            });
        }
        let k = self.cfg.num_modes;
        let mut mask = Mask::new(self.width, self.height);
        if self.frames_seen == 0 {
            for (i, &v) in frame.pixels.iter().enumerate() {
                let modes = &mut self.modes[i * k..(i + 1) * k];
                modes[0] = GaussianMode {
                    weight: T::one(),
                    mean: v,
                    variance: T::lit(self.cfg.initial_variance),
                };
            }
            self.frames_seen = 1;
            return Ok(mask);
        }
        let training = self.frames_seen < self.cfg.training_frames;
        let alpha = T::lit(self.cfg.learning_rate);
        let thr = T::lit(self.cfg.background_threshold);
        let d2 = T::lit(self.cfg.match_distance * self.cfg.match_distance);
        let init_var = T::lit(self.cfg.initial_variance);
        let min_var = T::lit(self.cfg.min_variance);
        for (i, &v) in frame.pixels.iter().enumerate() {
            let modes = &mut self.modes[i * k..(i + 1) * k];
            // Rank by weight / sigma; the stable sort keeps the order deterministic.
            modes.sort_by(|a, b| {
                let ra = a.weight / a.variance.sqrt();
                let rb = b.weight / b.variance.sqrt();
                rb.partial_cmp(&ra).expect("finite mode ranks")
            });
            let mut background = k;
            let mut acc = T::zero();
            for (j, m) in modes.iter().enumerate() {
                acc = acc + m.weight;
                if acc > thr {
                    background = j + 1;
                    break;
                }
            }
            let matched = modes.iter().position(|m| {
                m.weight > T::zero() && (v - m.mean) * (v - m.mean) <= d2 * m.variance
            });
            let is_background = matched.is_some_and(|j| j < background);
            if !training && !is_background {
                mask.bits[i] = true;
            }
            match matched {
                Some(j) => {
                    for (n, m) in modes.iter_mut().enumerate() {
                        m.weight = (T::one() - alpha) * m.weight + if n == j { alpha } else { T::zero() };
                    }
                    let m = &mut modes[j];
                    let diff = v - m.mean;
                    m.mean = m.mean + alpha * diff;
                    m.variance = (m.variance + alpha * (diff * diff - m.variance)).max(min_var);
                }
                None => {
                    let weakest = modes
                        .iter()
                        .enumerate()
                        .min_by(|a, b| a.1.weight.partial_cmp(&b.1.weight).expect("finite weights"))
                        .map(|(j, _)| j)
                        .expect("at least one mode");
                    modes[weakest] = GaussianMode {
                        weight: alpha,
                        mean: v,
                        variance: init_var,
                    };
                    let total: T = modes.iter().map(|m| m.weight).sum();
                    for m in modes.iter_mut() {
                        m.weight = m.weight / total;
                    }
                }
            }
        }
        self.frames_seen += 1;
        Ok(mask)
    }
}

/// Erosion with a 3x3 square; pixels outside the image count as set.
pub fn erode3(mask: &Mask) -> Mask {
    let (w, h) = (mask.width as isize, mask.height as isize);
    let mut out = Mask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            let all = (-1..=1).all(|dy| {
                (-1..=1).all(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx < 0 || ny < 0 || nx >= w || ny >= h || mask.get(nx as usize, ny as usize)
                })
            });
            out.set(x as usize, y as usize, all);
        }
    }
    out
}

/// Dilation with a 3x3 square; pixels outside the image count as clear.
pub fn dilate3(mask: &Mask) -> Mask {
    let (w, h) = (mask.width as isize, mask.height as isize);
    let mut out = Mask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            let any = (-1..=1).any(|dy| {
                (-1..=1).any(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as usize, ny as usize)
                })
            });
            out.set(x as usize, y as usize, any);
        }
    }
    out
}

/// Morphological opening with a 3x3 square structuring element.
pub fn morph_open(mask: &Mask) -> Mask {
    dilate3(&erode3(mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub centroid: (f64, f64),
    pub bbox: Rect<f64>,
    pub area: usize,
}

/// 8-connected components no larger than `max_area` pixels, in scan order.
pub fn blob_analysis(mask: &Mask, max_area: usize) -> Result<Vec<Blob>> {
    if max_area == 0 {
        return param("max_area must be positive");
    }
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut sx, mut sy, mut area) = (0usize, 0usize, 0usize);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            area += 1;
            sx += x;
            sy += y;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if area > max_area {
            continue;
        }
        blobs.push(Blob {
            centroid: (sx as f64 / area as f64, sy as f64 / area as f64),
            bbox: Rect::new(
                x0 as f64,
                y0 as f64,
                (x1 - x0 + 1) as f64,
                (y1 - y0 + 1) as f64,
            )?,
            area,
        });
    }
    Ok(blobs)
}

/// Which preprocessing steps run on a stream before detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Flat-field shading sigma in pixels; `None` disables the correction.
    pub flat_field_sigma: Option<f64>,
    pub contrast_stretch: bool,
}

impl PreprocessConfig {
    pub fn infrared() -> Self {
        PreprocessConfig {
            flat_field_sigma: Some(30.0),
            contrast_stretch: true,
        }
    }

    pub fn passthrough() -> Self {
        PreprocessConfig {
            flat_field_sigma: None,
            contrast_stretch: false,
        }
    }

    pub fn apply<T: Scalar>(&self, img: &GrayImage<T>) -> Result<GrayImage<T>> {
        let mut out = match self.flat_field_sigma {
            Some(s) => flat_field_correct(img, s)?,
            None => img.clone(),
        };
        if self.contrast_stretch {
            out = contrast_stretch(&out);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForegroundConfig {
    pub gmm: GmmConfig,
    /// `None` keeps the frame's upper half.
    pub crop: Option<CropRect>,
    pub max_blob_area: usize,
}

impl Default for ForegroundConfig {
    fn default() -> Self {
        ForegroundConfig {
            gmm: GmmConfig::default(),
            crop: None,
            max_blob_area: 1000,
        }
    }
}

/// Moving-object extractor for the fish-eye stream.
#[derive(Debug, Clone)]
pub struct ForegroundDetector<T = f64> {
    cfg: ForegroundConfig,
    model: Option<GmmModel<T>>,
}

impl<T: Scalar> ForegroundDetector<T> {
    pub fn new(cfg: ForegroundConfig) -> Result<Self> {
        cfg.gmm.validate()?;
        if cfg.max_blob_area == 0 {
            return param("max_blob_area must be positive");
        }
        Ok(ForegroundDetector { cfg, model: None })
    }

    pub fn process(&mut self, frame: &GrayImage<T>) -> Result<Vec<Blob>> {
        let sky = match self.cfg.crop {
            Some(r) => crop(frame, r)?,
            None => crop_upper_half(frame)?,
        };
        let model = match &mut self.model {
            Some(m) => m,
            None => self
                .model
                .insert(GmmModel::new(sky.width, sky.height, self.cfg.gmm)?),
        };
        let mask = model.apply(&sky)?;
        blob_analysis(&morph_open(&mask), self.cfg.max_blob_area)
    }
}

fn pnm_header(data: &[u8], magic: &[u8; 2], fields: usize) -> Result<(Vec<usize>, usize)> {
    if data.len() < 2 || &data[..2] != magic {
        return Err(Error::Malformed(format!(
            "expected {} header",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut values = Vec::new();
    while values.len() < fields {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Malformed("truncated PNM header".into()));
        }
        let v = std::str::from_utf8(&data[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Malformed("bad PNM header number".into()))?;
        values.push(v);
    }
    // single whitespace byte before the raster
    Ok((values, pos + 1))
}

/// Reads a binary 8-bit PGM (P5).
pub fn read_pgm(data: &[u8]) -> Result<GrayImage<f64>> {
    let (hdr, start) = pnm_header(data, b"P5", 3)?;
    let (w, h, maxval) = (hdr[0], hdr[1], hdr[2]);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Malformed(format!("unsupported PGM maxval {maxval}")));
    }
    let raster = data
        .get(start..start + w * h)
        .ok_or_else(|| Error::Malformed("truncated PGM raster".into()))?;
    GrayImage::new(
        w,
        h,
        raster.iter().map(|b| *b as f64 / maxval as f64).collect(),
    )
}

pub fn write_pgm<T: Scalar>(img: &GrayImage<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(
        img.pixels
            .iter()
            .map(|p| (p.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// Writes a packed binary PBM (P4); set bits are foreground (black).
pub fn write_pbm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P4\n{} {}\n", mask.width, mask.height).into_bytes();
    for y in 0..mask.height {
        for chunk in (0..mask.width).collect::<Vec<_>>().chunks(8) {
            let mut byte = 0u8;
            for (i, x) in chunk.iter().enumerate() {
                if mask.get(*x, y) {
                    byte |= 0x80 >> i;
                }
            }
            out.push(byte);
        }
    }
    out
}

pub fn read_pbm(data: &[u8]) -> Result<Mask> {
    let (hdr, start) = pnm_header(data, b"P4", 2)?;
    let (w, h) = (hdr[0], hdr[1]);
    let row_bytes = w.div_ceil(8);
    let raster = data
        .get(start..start + row_bytes * h)
        .ok_or_else(|| Error::Malformed("truncated PBM raster".into()))?;
    let mut mask = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            mask.set(x, y, raster[y * row_bytes + x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_survives_flat_field() {
        let img = GrayImage::filled(40, 30, 0.5f64);
        let out = flat_field_correct(&img, 30.0).unwrap();
        assert!(out.pixels().iter().all(|p| (p - 0.5).abs() < 1e-12));
        assert!(flat_field_correct(&img, 0.0).is_err());
    }

    #[test]
    fn flat_field_keeps_bright_pixel_argmax() {
        let mut img = GrayImage::filled(50, 40, 0.2);
        img.set(17, 23, 0.9);
        let out = flat_field_correct(&img, 5.0).unwrap();
        let argmax = out
            .pixels()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 23 * 50 + 17);
    }

    #[test]
    fn contrast_stretch_cases() {
        let c = GrayImage::filled(10, 10, 0.3);
        assert_eq!(contrast_stretch(&c), c);
        let img = GrayImage::from_fn(101, 1, |x, _| 0.4 + 0.2 * x as f64 / 100.0);
        let out = contrast_stretch(&img);
        assert_eq!(out.pixels()[0], 0.0);
        assert_eq!(out.pixels()[100], 1.0);
        assert!((out.pixels()[50] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crops() {
        let img = GrayImage::from_fn(2, 2, |x, y| (x + 2 * y) as f64 / 4.0);
        let top = crop_upper_half(&img).unwrap();
        assert_eq!((top.width(), top.height()), (2, 1));
        assert_eq!(top.pixels(), img.row(0));
        let img4 = GrayImage::from_fn(4, 4, |x, y| (x + 4 * y) as f64 / 16.0);
        let top4 = crop_upper_half(&img4).unwrap();
        assert_eq!(top4.pixels(), &img4.pixels()[..8]);
        assert!(crop_upper_half(&GrayImage::filled(4, 3, 0.0)).is_err());
        let full = GrayImage::filled(1280, 768, 0.1);
        let sky = crop(&full, CropRect::FISHEYE_SKY).unwrap();
        assert_eq!((sky.width(), sky.height()), (1024, 384));
        let half = crop_upper_half(&full).unwrap();
        assert_eq!((half.width(), half.height()), (1280, 384));
    }

    #[test]
    fn gmm_trains_silently_then_sees_background() {
        let cfg = GmmConfig::default();
        let mut model = GmmModel::<f64>::new(8, 8, cfg).unwrap();
        let frame = GrayImage::from_fn(8, 8, |x, y| 0.2 + 0.05 * ((x * 3 + y) % 5) as f64);
        for _ in 0..cfg.training_frames {
            assert_eq!(model.apply(&frame).unwrap().count(), 0);
        }
        assert_eq!(model.apply(&frame).unwrap().count(), 0);
        assert!(model.apply(&GrayImage::filled(4, 8, 0.0)).is_err());
    }

    #[test]
    fn gmm_weights_sum_to_one() {
        let mut model = GmmModel::<f64>::new(3, 3, GmmConfig::default()).unwrap();
        for i in 0..40 {
            let f = GrayImage::from_fn(3, 3, |x, y| ((i * 7 + x * 13 + y * 5) % 11) as f64 / 10.0);
            model.apply(&f).unwrap();
            for y in 0..3 {
                for x in 0..3 {
                    let s: f64 = model.pixel_modes(x, y).iter().map(|m| m.weight).sum();
                    assert!((s - 1.0).abs() < 1e-9);
                    assert!(model.pixel_modes(x, y).iter().all(|m| m.variance > 0.0));
                }
            }
        }
    }

    #[test]
    fn alternating_pixel_becomes_background() {
        let mut model = GmmModel::<f64>::new(1, 1, GmmConfig::default()).unwrap();
        let a = GrayImage::filled(1, 1, 0.2);
        let b = GrayImage::filled(1, 1, 0.8);
        let mut last = Vec::new();
        for i in 0..400 {
            let m = model.apply(if i % 2 == 0 { &a } else { &b }).unwrap();
            if i >= 396 {
                last.push(m.get(0, 0));
            }
        }
        assert_eq!(last, vec![false; 4]);
        // both modes hold close to half the weight each
        let w: Vec<f64> = model.pixel_modes(0, 0).iter().map(|m| m.weight).take(2).collect();
        assert!(w.iter().all(|v| (v - 0.5).abs() < 0.05), "{w:?}");
    }

    fn square(w: usize, h: usize, x0: usize, y0: usize, s: usize) -> Mask {
        let mut m = Mask::new(w, h);
        m.fill_rect(x0, y0, s, s);
        m
    }

    #[test]
    fn opening_cases() {
        let mut single = Mask::new(9, 9);
        single.set(4, 4, true);
        assert_eq!(morph_open(&single).count(), 0);
        let sq = square(12, 12, 3, 3, 5);
        assert_eq!(morph_open(&sq), sq);
        let mut both = sq.clone();
        both.set(10, 10, true);
        assert_eq!(morph_open(&both), sq);
    }

    #[test]
    fn blob_cases() {
        assert!(blob_analysis(&Mask::new(5, 5), 1000).unwrap().is_empty());
        let blobs = blob_analysis(&square(30, 30, 10, 10, 4), 1000).unwrap();
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].centroid, (11.5, 11.5));
        assert_eq!(blobs[0].bbox, Rect::new(10.0, 10.0, 4.0, 4.0).unwrap());
        assert_eq!(blobs[0].area, 16);
        assert!(blob_analysis(&square(60, 60, 5, 5, 40), 1000).unwrap().is_empty());
        // diagonal neighbours join under 8-connectivity
        let mut diag = Mask::new(4, 4);
        diag.set(0, 0, true);
        diag.set(1, 1, true);
        assert_eq!(blob_analysis(&diag, 10).unwrap().len(), 1);
    }

    #[test]
    fn pnm_roundtrip() {
        let img = GrayImage::from_fn(5, 3, |x, y| ((x + y) * 17) as f64 / 255.0);
        let back = read_pgm(&write_pgm(&img)).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1.0 / 255.0);
        }
        let m = square(11, 4, 2, 0, 3);
        assert_eq!(read_pbm(&write_pbm(&m)).unwrap(), m);
        assert!(read_pgm(b"P6\n1 1\n255\n\0").is_err());
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        proptest::collection::vec(any::<bool>(), 12 * 10)
            .prop_map(|bits| Mask::from_bits(12, 10, bits).unwrap())
    }

    proptest! {
        #[test]
        fn opening_idempotent(m in arb_mask()) {
            let once = morph_open(&m);
            prop_assert_eq!(morph_open(&once), once);
        }

        #[test]
        fn blobs_disjoint_and_inside_mask(m in arb_mask()) {
            let blobs = blob_analysis(&m, 1000).unwrap();
            let total: usize = blobs.iter().map(|b| b.area).sum();
            prop_assert_eq!(total, m.count());
            for b in &blobs {
                prop_assert!(b.area as f64 <= b.bbox.area());
            }
        }
    }
}
