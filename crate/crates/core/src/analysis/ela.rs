use super::{AnalysisError, Heatmap, Normalization};
use crate::codec::{decode, encode, ColorSpace, EncodeParams, PixelImage, Subsampling};

pub const DEFAULT_ELA_QUALITY: u8 = 95;
pub const DEFAULT_ELA_AMPLIFICATION: f64 = 20.0;

/// Error level analysis: re-encode at `quality` (4:4:4), decode, and take
/// `amplification * mean_c |orig - recompressed|`, clamped to 255.
pub fn ela(img: &PixelImage, quality: u8, amplification: f64) -> Result<Heatmap, AnalysisError> {
    if !(amplification > 0.0) {
        return Err(AnalysisError::InvalidParams("amplification must be positive"));
    }
    let src = match img.color_space {
        ColorSpace::YCbCr => img.to_rgb(),
        _ => img.clone(),
    };
    let params = EncodeParams::quality(quality).with_subsampling(Subsampling::S444);
    let again = decode(&encode(&src, &params)?)?;
    let c = src.channels() as f64;
    let values = (0..src.pixel_count())
        .map(|i| {
            let diff: f64 = src
                .planes
                .iter()
                .zip(&again.planes)
                .map(|(a, b)| (a.data[i] as f64 - b.data[i] as f64).abs())
                .sum();
            (amplification * diff / c).min(255.0)
        })
        .collect();
    Ok(Heatmap::new(src.width, src.height, values, Normalization::Raw))
}
