//! Deterministic depth descriptor standing in for a learned encoder, and the
//! augmentation pipeline used to stress retrieval.
//!
//! The descriptor sees shape only. It z-normalizes the valid depths of a
//! 128x128 crop, then concatenates
//!
//! * a 16x16 grid of block means of the normalized depth (256 values), and
//! * a 4x4 grid of 8-bin gradient-orientation histograms weighted by Sobel
//!   magnitude on the 2x2-pooled image, linearly interpolated between
//!   bins (128 values),
//!
//! each part scaled to a fixed share of the final unit vector. Depth scale
//! and offset cancel in the normalization, so the embedding does not depend
//! on viewing distance.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::DepthImage;

/// Side of the standard descriptor crop.
pub const CROP_SIZE: usize = 128;
const GRID: usize = 16;
const HIST_GRID: usize = 4;
const HIST_BINS: usize = 8;
pub const GRID_DIM: usize = GRID * GRID;
pub const HIST_DIM: usize = HIST_GRID * HIST_GRID * HIST_BINS;
/// Embedding length.
pub const EMBEDDING_DIM: usize = GRID_DIM + HIST_DIM;
const MIN_VALID: usize = 16;

// Share of the squared norm given to the block grid; the histogram gets the rest.
const GRID_SHARE: f64 = 0.3;

// Gradients are taken on 2x2 block means; a block touching background is background.
const GRADIENT_POOL: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("image has {0} valid pixels, need at least {MIN_VALID}")]
    EmptyImage(usize),
    #[error("expected a {CROP_SIZE}x{CROP_SIZE} crop, got {0}x{1}")]
    WrongSize(usize, usize),
    #[error("embedding must have non-zero finite norm")]
    ZeroEmbedding,
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

/// Unit-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// L2-normalize arbitrary values.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self, DescriptorError> {
        let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(DescriptorError::ZeroEmbedding);
        }
        values.iter_mut().for_each(|v| *v /= n);
        Ok(Self { values })
    }

    /// Keep `values` as given when already unit to within 1e-6 (stored
    /// embeddings), otherwise normalize.
    pub fn from_stored(values: Vec<f64>) -> Result<Self, DescriptorError> {
        let n2 = values.iter().map(|v| v * v).sum::<f64>();
        if values.iter().all(|v| v.is_finite()) && (n2 - 1.0).abs() <= 1e-6 {
            return Ok(Self { values });
        }
        Self::from_values(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Cosine similarity (both sides are unit vectors).
    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Compute the embedding of a standard crop.
pub fn embed(image: &DepthImage) -> Result<Embedding, DescriptorError> {
    let (w, h) = (image.width(), image.height());
    if w != CROP_SIZE || h != CROP_SIZE {
        return Err(DescriptorError::WrongSize(w, h));
    }
    let data = image.data();
    let valid: Vec<f64> = data.iter().copied().filter(|d| *d > 0.0).collect();
    if valid.len() < MIN_VALID {
        return Err(DescriptorError::EmptyImage(valid.len()));
    }
    let n = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / n;
    let var = valid.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 0.0 { 1.0 / std } else { 0.0 };
    // NaN marks background so it can be told apart from the mean depth.
    let norm: Vec<f64> = data
        .iter()
        .map(|d| if *d > 0.0 { (d - mean) * scale } else { f64::NAN })
        .collect();

    let mut grid = vec![0.0; GRID_DIM];
    let block = CROP_SIZE / GRID;
    for (gi, g) in grid.iter_mut().enumerate() {
        let (bx, by) = (gi % GRID, gi / GRID);
        let (mut sum, mut count) = (0.0, 0usize);
        for v in by * block..(by + 1) * block {
            for u in bx * block..(bx + 1) * block {
                let z = norm[v * CROP_SIZE + u];
                if !z.is_nan() {
                    sum += z;
                    count += 1;
                }
            }
        }
        if count > 0 {
            *g = sum / count as f64;
        }
    }

    let mut hist = vec![0.0; HIST_DIM];
    let ds = GRADIENT_POOL;
    let side = CROP_SIZE / ds;
    let mut coarse = vec![0.0; side * side];
    for v in 0..side {
        for u in 0..side {
            let mut acc = 0.0;
            for dv in 0..ds {
                for du in 0..ds {
                    acc += norm[(v * ds + dv) * CROP_SIZE + u * ds + du];
                }
            }
            coarse[v * side + u] = acc / (ds * ds) as f64;
        }
    }
    let cell = side / HIST_GRID;
    let at = |u: usize, v: usize| coarse[v * side + u];
    for v in 1..side - 1 {
        for u in 1..side - 1 {
            let (a, b, c) = (at(u - 1, v - 1), at(u, v - 1), at(u + 1, v - 1));
            let (d, f) = (at(u - 1, v), at(u + 1, v));
            let (g, hh, i) = (at(u - 1, v + 1), at(u, v + 1), at(u + 1, v + 1));
            let gx = (c + 2.0 * f + i) - (a + 2.0 * d + g);
            let gy = (g + 2.0 * hh + i) - (a + 2.0 * b + c);
            // Any background in the 3x3 stencil makes the result NaN.
            if at(u, v).is_nan() || gx.is_nan() || gy.is_nan() {
                continue;
            }
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            // Split the magnitude between the two nearest bin centres.
            let pos = (gy.atan2(gx) + std::f64::consts::PI) / std::f64::consts::TAU * HIST_BINS as f64 - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as i64).rem_euclid(HIST_BINS as i64) as usize;
            let b1 = (b0 + 1) % HIST_BINS;
            let c = ((v / cell) * HIST_GRID + u / cell) * HIST_BINS;
            hist[c + b0] += mag * (1.0 - frac);
            hist[c + b1] += mag * frac;
        }
    }

    let mut values = Vec::with_capacity(EMBEDDING_DIM);
    scale_part(&mut grid, GRID_SHARE.sqrt());
    scale_part(&mut hist, (1.0 - GRID_SHARE).sqrt());
    values.extend_from_slice(&grid);
    values.extend_from_slice(&hist);
    Embedding::from_values(values).or_else(|_| {
        // Perfectly flat crop: every feature is zero. Fall back to a fixed
        // direction so the result stays a unit vector.
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[0] = 1.0;
        Embedding::from_values(v)
    })
}

fn scale_part(part: &mut [f64], target: f64) {
    let n = part.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        part.iter_mut().for_each(|v| *v *= target / n);
    }
}

/// How pixels outside the object are filled after augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundMode {
    #[default]
    Zero,
    RandomPlane,
    RandomClutter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    /// Maximum shift in pixels along each axis.
    pub translation_jitter: usize,
    /// Multiplicative zoom range about the crop centre.
    pub scale_range: (f64, f64),
    pub occlusion_patches: usize,
    /// Square patches get a side drawn from `[max_side / 2, max_side]`.
    pub occlusion_max_side: usize,
    /// Standard deviation of additive depth noise, meters.
    pub depth_noise_sigma: f64,
    pub background: BackgroundMode,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            translation_jitter: 4,
            scale_range: (0.95, 1.05),
            occlusion_patches: 2,
            occlusion_max_side: 12,
            depth_noise_sigma: 0.005,
            background: BackgroundMode::Zero,
        }
    }
}

impl AugmentationConfig {
    /// No-op augmentation.
    pub fn none() -> Self {
        Self {
            translation_jitter: 0,
            scale_range: (1.0, 1.0),
            occlusion_patches: 0,
            occlusion_max_side: 0,
            depth_noise_sigma: 0.0,
            background: BackgroundMode::Zero,
        }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return Err(DescriptorError::InvalidConfig(format!(
                "scale range ({lo}, {hi}) must bracket 1"
            )));
        }
        if !(self.depth_noise_sigma >= 0.0 && self.depth_noise_sigma.is_finite()) {
            return Err(DescriptorError::InvalidConfig("noise sigma must be >= 0".into()));
        }
        if self.occlusion_patches > 0 && self.occlusion_max_side == 0 {
            return Err(DescriptorError::InvalidConfig(
                "occlusion patches need a positive side".into(),
            ));
        }
        Ok(())
    }
}

/// Apply, in order: shift, zoom, occlusion, depth noise, background fill.
/// All randomness comes from `rng`.
pub fn augment<R: Rng + ?Sized>(image: &DepthImage, cfg: &AugmentationConfig, rng: &mut R) -> DepthImage {
    let (w, h) = (image.width(), image.height());
    let mut img = image.clone();

    if cfg.translation_jitter > 0 {
        let j = cfg.translation_jitter as i64;
        let (dx, dy) = (rng.random_range(-j..=j), rng.random_range(-j..=j));
        let mut out = DepthImage::zeros(w, h);
        for v in 0..h {
            for u in 0..w {
                out.set(u, v, img.get_or_zero(u as i64 - dx, v as i64 - dy));
            }
        }
        img = out;
    }

    let (lo, hi) = cfg.scale_range;
    if hi > lo {
        let s = rng.random_range(lo..=hi);
        let (cu, cv) = (w as f64 / 2.0, h as f64 / 2.0);
        let mut out = DepthImage::zeros(w, h);
        for v in 0..h {
            let sv = (cv + (v as f64 + 0.5 - cv) / s).floor() as i64;
            for u in 0..w {
                let su = (cu + (u as f64 + 0.5 - cu) / s).floor() as i64;
                out.set(u, v, img.get_or_zero(su, sv));
            }
        }
        img = out;
    }

    if cfg.occlusion_patches > 0 {
        let max_side = cfg.occlusion_max_side.min(w).min(h);
        let min_side = (max_side / 2).max(1);
        for _ in 0..cfg.occlusion_patches {
            let side = rng.random_range(min_side..=max_side);
            let u0 = rng.random_range(0..=w - side);
            let v0 = rng.random_range(0..=h - side);
            for v in v0..v0 + side {
                for u in u0..u0 + side {
                    img.set(u, v, 0.0);
                }
            }
        }
    }

    if cfg.depth_noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.depth_noise_sigma).expect("validated sigma");
        for v in 0..h {
            for u in 0..w {
                let d = img.get(u, v);
                if d > 0.0 {
                    img.set(u, v, (d + noise.sample(rng)).max(1e-6));
                }
            }
        }
    }

    let far = img.data().iter().copied().fold(0.0, f64::max);
    match cfg.background {
        BackgroundMode::Zero => {}
        BackgroundMode::RandomPlane => {
            let base = far + rng.random_range(0.05..0.3);
            let (gx, gy) = (rng.random_range(-5e-4..5e-4), rng.random_range(-5e-4..5e-4));
            for v in 0..h {
                for u in 0..w {
                    if img.get(u, v) == 0.0 {
                        let d = base + gx * (u as f64 - w as f64 / 2.0) + gy * (v as f64 - h as f64 / 2.0);
                        img.set(u, v, d.max(1e-6));
                    }
                }
            }
        }
        BackgroundMode::RandomClutter => {
            let block = 8;
            let cols = w.div_ceil(block);
            let rows = h.div_ceil(block);
            let depths: Vec<f64> = (0..cols * rows)
                .map(|_| far + rng.random_range(0.02..0.5))
                .collect();
            for v in 0..h {
                for u in 0..w {
                    if img.get(u, v) == 0.0 {
                        img.set(u, v, depths[(v / block) * cols + u / block]);
                    }
                }
            }
        }
    }
    img
}
