//! Pixel-domain localization: error level analysis, median-filter noise
//! residue, luminance gradient and per-pixel PCA projection. Each produces a
//! [`Heatmap`]; [`verdict_from_heatmap`] turns one into a region verdict.

mod ela;
mod gradient;
mod noise;
mod pca;
pub mod png;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, PixelImage};

pub use ela::{ela, DEFAULT_ELA_AMPLIFICATION, DEFAULT_ELA_QUALITY};
pub use gradient::luminance_gradient;
pub use noise::{median_row_then_column, noise_analysis, DEFAULT_MEDIAN_WINDOW};
pub use pca::{pca_eigen, pca_projection, PcaResult};

/// Floor for the outside mean when computing region scores.
pub const SCORE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("median window {window} must be odd and at least 3")]
    BadWindow { window: usize },
    #[error("median window {window} exceeds image size {width}x{height}")]
    WindowTooLarge { window: usize, width: usize, height: usize },
    #[error("covariance has rank below {component}")]
    DegenerateCovariance { component: usize },
    #[error("PCA component must be 1, 2 or 3, got {0}")]
    BadComponent(usize),
    #[error("mask has {got} cells, heatmap has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    MinmaxScaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Row-major, non-negative.
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, normalization: Normalization) -> Heatmap {
        assert_eq!(values.len(), width * height, "heatmap size mismatch");
        Heatmap {
            width,
            height,
            values,
            normalization,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Rescales to [0, 1]. A flat map becomes all zeros.
    pub fn minmax_scaled(&self) -> Heatmap {
        Heatmap::new(self.width, self.height, minmax(&self.values), Normalization::MinmaxScaled)
    }

    /// 8-bit rendering: raw maps are clamped to 0..=255, scaled maps
    /// multiplied by 255.
    pub fn to_gray8(&self) -> Vec<u8> {
        let k = match self.normalization {
            Normalization::Raw => 1.0,
            Normalization::MinmaxScaled => 255.0,
        };
        self.values.iter().map(|v| (v * k).round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn to_image(&self) -> PixelImage {
        PixelImage::gray(self.width, self.height, self.to_gray8())
    }

    pub fn to_png(&self) -> Vec<u8> {
        png::write_gray8(self.width, self.height, &self.to_gray8())
    }

    /// Mean heat over `block`x`block` tiles; partial edge tiles average what
    /// they cover.
    pub fn block_means(&self, block: usize) -> Heatmap {
        let block = block.max(1);
        let (bw, bh) = (self.width.div_ceil(block), self.height.div_ceil(block));
        let mut sum = vec![0.0; bw * bh];
        let mut count = vec![0usize; bw * bh];
        for y in 0..self.height {
            for x in 0..self.width {
                let i = (y / block) * bw + x / block;
                sum[i] += self.get(x, y);
                count[i] += 1;
            }
        }
        let values = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
        Heatmap::new(bw, bh, values, self.normalization)
    }
}

pub(crate) fn minmax(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    /// Pixels above the Otsu threshold.
    #[serde(skip)]
    pub suspicious_mask: Vec<bool>,
    pub suspicious_fraction: f64,
    /// mean(heat inside) / max(mean(heat outside), epsilon), using the
    /// evaluation mask when one is supplied and the Otsu mask otherwise.
    pub score: f64,
    pub threshold_used: f64,
    pub mean_inside: f64,
    pub mean_outside: f64,
}

/// Otsu threshold over a 256-bin histogram spanning [min, max]. Returns the
/// upper edge of the last background bin; `None` for a flat map.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let width = (hi - lo) / 256.0;
    let mut hist = [0u64; 256];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(255);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for (k, &c) in hist.iter().enumerate().take(255) {
        w0 += c as f64;
        sum0 += k as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    Some(lo + (best_k + 1) as f64 * width)
}

fn region_means(values: &[f64], mask: &[bool]) -> (f64, f64) {
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &m) in values.iter().zip(mask) {
        if m {
            si += v;
            ni += 1;
        } else {
            so += v;
            no += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    (mean(si, ni), mean(so, no))
}

pub fn verdict_from_heatmap(h: &Heatmap, mask: Option<&[bool]>) -> Result<RegionVerdict, AnalysisError> {
    if let Some(m) = mask {
        if m.len() != h.values.len() {
            return Err(AnalysisError::DimensionMismatch {
                expected: h.values.len(),
                got: m.len(),
            });
        }
    }
    let (suspicious_mask, threshold_used) = match otsu_threshold(&h.values) {
        Some(t) => (h.values.iter().map(|&v| v > t).collect::<Vec<_>>(), t),
        None => (vec![false; h.values.len()], h.max()),
    };
    let scoring = mask.unwrap_or(&suspicious_mask);
    let (mean_inside, mean_outside) = region_means(&h.values, scoring);
    let score = if scoring.iter().any(|&m| m) {
        mean_inside / mean_outside.max(SCORE_EPSILON)
    } else {
        0.0
    };
    let n = suspicious_mask.len().max(1) as f64;
    Ok(RegionVerdict {
        suspicious_fraction: suspicious_mask.iter().filter(|&&m| m).count() as f64 / n,
        suspicious_mask,
        score,
        threshold_used,
        mean_inside,
        mean_outside,
    })
}
