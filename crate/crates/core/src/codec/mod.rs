//! Baseline sequential JPEG codec.
//!
//! Decoding accepts 8-bit Huffman-coded sequential frames (SOF0, SOF1) with
//! one or three components. Encoding writes SOF0 with the Annex K tables.
//! Colour conversion is BT.601 full range; chroma is upsampled by
//! nearest neighbour and downsampled by 2x2 box averaging.

pub mod dct;
mod decoder;
mod encoder;
pub mod huffman;
pub mod raw;
pub mod tables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segments::{CodingProcess, SegmentError};

pub use decoder::{decode, decode_with, DecodeOptions, DEFAULT_MAX_PIXELS};
pub use encoder::{encode, encode_with_tables};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("unsupported coding process: {0}")]
    UnsupportedCoding(CodingProcess),
    #[error("corrupt entropy-coded data: {0}")]
    CorruptEntropyData(&'static str),
    #[error("bad Huffman table: {0}")]
    BadHuffmanTable(&'static str),
    #[error("{kind} table {id} referenced but never defined")]
    MissingTable { kind: &'static str, id: u8 },
    #[error("image of {width}x{height} exceeds the limit of {limit} pixels")]
    DimensionOverflow { width: u64, height: u64, limit: u64 },
    #[error("malformed stream: {0}")]
    Malformed(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Grayscale,
    Rgb,
    YCbCr,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Grayscale => 1,
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
        }
    }
}

/// Chroma layout of the stream an image came from (or is written to).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsampling {
    #[serde(rename = "4:4:4")]
    S444,
    #[serde(rename = "4:2:0")]
    S420,
    #[serde(rename = "4:2:2")]
    S422,
    #[serde(rename = "none")]
    None,
}

impl Subsampling {
    /// Classifies per-component (h, v) sampling factors, luma first.
    pub fn from_factors(factors: &[(u8, u8)]) -> Subsampling {
        match factors {
            [_] | [] => Subsampling::None,
            [y, rest @ ..] if rest.iter().all(|c| c == y) => Subsampling::S444,
            [(2, 2), (1, 1), (1, 1)] => Subsampling::S420,
            [(2, 1), (1, 1), (1, 1)] => Subsampling::S422,
            _ => Subsampling::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Plane {
        assert_eq!(data.len(), width * height, "plane size mismatch");
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, v: u8) -> Plane {
        Plane::new(width, height, vec![v; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Planar 8-bit image. All planes are full resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    pub width: usize,
    pub height: usize,
    pub color_space: ColorSpace,
    pub subsampling: Subsampling,
    pub planes: Vec<Plane>,
}

impl PixelImage {
    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> PixelImage {
        PixelImage {
            width,
            height,
            color_space: ColorSpace::Grayscale,
            subsampling: Subsampling::None,
            planes: vec![Plane::new(width, height, data)],
        }
    }

    pub fn rgb_planes(width: usize, height: usize, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> PixelImage {
        PixelImage {
            width,
            height,
            color_space: ColorSpace::Rgb,
            subsampling: Subsampling::None,
            planes: vec![
                Plane::new(width, height, r),
                Plane::new(width, height, g),
                Plane::new(width, height, b),
            ],
        }
    }

    pub fn from_rgb_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> PixelImage {
        let n = width * height;
        let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for y in 0..height {
            for x in 0..width {
                let p = f(x, y);
                r.push(p[0]);
                g.push(p[1]);
                b.push(p[2]);
            }
        }
        PixelImage::rgb_planes(width, height, r, g, b)
    }

    pub fn from_gray_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> PixelImage {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        PixelImage::gray(width, height, data)
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// RGB triple at (x, y); grayscale is replicated.
    pub fn rgb_at(&self, x: usize, y: usize) -> [u8; 3] {
        match self.color_space {
            ColorSpace::Grayscale => {
                let v = self.planes[0].get(x, y);
                [v, v, v]
            }
            ColorSpace::Rgb => [
                self.planes[0].get(x, y),
                self.planes[1].get(x, y),
                self.planes[2].get(x, y),
            ],
            ColorSpace::YCbCr => {
                let i = y * self.width + x;
                ycbcr_to_rgb(
                    self.planes[0].data[i] as f64,
                    self.planes[1].data[i] as f64,
                    self.planes[2].data[i] as f64,
                )
            }
        }
    }

    /// BT.601 luma as reals, row-major.
    pub fn luma(&self) -> Vec<f64> {
        match self.color_space {
            ColorSpace::Grayscale | ColorSpace::YCbCr => {
                self.planes[0].data.iter().map(|&v| v as f64).collect()
            }
            ColorSpace::Rgb => {
                let [r, g, b] = [&self.planes[0].data, &self.planes[1].data, &self.planes[2].data];
                (0..self.pixel_count())
                    .map(|i| 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)
                    .collect()
            }
        }
    }

    /// Converts to RGB planes (no-op for RGB input).
    pub fn to_rgb(&self) -> PixelImage {
        if self.color_space == ColorSpace::Rgb {
            return self.clone();
        }
        let mut out = PixelImage::from_rgb_fn(self.width, self.height, |x, y| self.rgb_at(x, y));
        out.subsampling = self.subsampling;
        out
    }

    /// Checks plane count and dimensions against the header fields.
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.planes.len() != self.color_space.channels() {
            return Err(CodecError::InvalidParams("plane count does not match colour space"));
        }
        if self
            .planes
            .iter()
            .any(|p| p.width != self.width || p.height != self.height || p.data.len() != p.width * p.height)
        {
            return Err(CodecError::InvalidParams("plane dimensions do not match image"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeParams {
    pub quality: u8,
    /// `S444` or `S420`.
    pub subsampling: Subsampling,
    /// MCUs per restart interval.
    pub restart_interval: Option<u16>,
}

impl EncodeParams {
    pub fn quality(quality: u8) -> EncodeParams {
        EncodeParams {
            quality,
            ..EncodeParams::default()
        }
    }

    pub fn with_subsampling(mut self, s: Subsampling) -> EncodeParams {
        self.subsampling = s;
        self
    }

    pub fn with_restart_interval(mut self, mcus: u16) -> EncodeParams {
        self.restart_interval = Some(mcus);
        self
    }
}

impl Default for EncodeParams {
    fn default() -> Self {
        EncodeParams {
            quality: 75,
            subsampling: Subsampling::S444,
            restart_interval: None,
        }
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub(crate) fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> [f64; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0,
    ]
}

pub(crate) fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> [u8; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    [
        clamp_u8(y + 1.402 * cr),
        clamp_u8(y - 0.344_136_286 * cb - 0.714_136_286 * cr),
        clamp_u8(y + 1.772 * cb),
    ]
}

/// Peak signal-to-noise ratio over all channels, in dB. Identical inputs give
/// infinity.
pub fn psnr(a: &PixelImage, b: &PixelImage) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "psnr: size mismatch");
    let (a, b) = (a.to_rgb(), b.to_rgb());
    let mut se = 0.0;
    for (pa, pb) in a.planes.iter().zip(&b.planes) {
        for (&x, &y) in pa.data.iter().zip(&pb.data) {
            let d = x as f64 - y as f64;
            se += d * d;
        }
    }
    let mse = se / (3 * a.pixel_count()) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}
