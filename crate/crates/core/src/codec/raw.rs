//! Raw interchange format for pixel images and heatmaps.
//!
//! ```text
//! u32 BE width | u32 BE height | u8 channels (1 or 3) | samples
//! ```
//! Samples are 8-bit, row-major, channel-interleaved. One channel reads back
//! as grayscale, three as RGB.

use super::{CodecError, ColorSpace, PixelImage};

const HEADER: usize = 9;

pub fn write_raw(img: &PixelImage) -> Vec<u8> {
    let img = match img.color_space {
        ColorSpace::YCbCr => img.to_rgb(),
        _ => img.clone(),
    };
    let c = img.channels();
    let mut out = Vec::with_capacity(HEADER + img.pixel_count() * c);
    out.extend((img.width as u32).to_be_bytes());
    out.extend((img.height as u32).to_be_bytes());
    out.push(c as u8);
    for i in 0..img.pixel_count() {
        out.extend(img.planes.iter().map(|p| p.data[i]));
    }
    out
}

pub fn read_raw(bytes: &[u8]) -> Result<PixelImage, CodecError> {
    if bytes.len() < HEADER {
        return Err(CodecError::Malformed("raw header truncated"));
    }
    let w = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let c = bytes[8] as usize;
    if c != 1 && c != 3 {
        return Err(CodecError::Malformed("raw channel count must be 1 or 3"));
    }
    let n = w.checked_mul(h).and_then(|n| n.checked_mul(c));
    if n != Some(bytes.len() - HEADER) {
        return Err(CodecError::Malformed("raw sample count does not match header"));
    }
    let samples = &bytes[HEADER..];
    if c == 1 {
        return Ok(PixelImage::gray(w, h, samples.to_vec()));
    }
    let plane = |k: usize| samples.iter().skip(k).step_by(3).copied().collect();
    Ok(PixelImage::rgb_planes(w, h, plane(0), plane(1), plane(2)))
}
