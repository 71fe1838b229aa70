use super::{AnalysisError, Heatmap, Normalization};
use crate::codec::PixelImage;

pub const DEFAULT_MEDIAN_WINDOW: usize = 3;

/// Median-filter residue of the luma plane: `|L - median(L)|`.
pub fn noise_analysis(img: &PixelImage, window: usize) -> Result<Heatmap, AnalysisError> {
    let l = img.luma();
    let filtered = median_row_then_column(&l, img.width, img.height, window)?;
    let values = l.iter().zip(&filtered).map(|(a, b)| (a - b).abs()).collect();
    Ok(Heatmap::new(img.width, img.height, values, Normalization::Raw))
}

/// Separable median: a horizontal pass of length `window`, then a vertical
/// pass over its output. Borders replicate the edge sample.
pub fn median_row_then_column(
    plane: &[f64],
    width: usize,
    height: usize,
    window: usize,
) -> Result<Vec<f64>, AnalysisError> {
    if window < 3 || window % 2 == 0 {
        return Err(AnalysisError::BadWindow { window });
    }
    if window > width.min(height) {
        return Err(AnalysisError::WindowTooLarge { window, width, height });
    }
    assert_eq!(plane.len(), width * height);
    let mut rows = vec![0.0; plane.len()];
    let mut line = Vec::with_capacity(width.max(height));
    let mut out = Vec::with_capacity(width.max(height));
    for y in 0..height {
        sliding_median(&plane[y * width..(y + 1) * width], window, &mut out);
        rows[y * width..(y + 1) * width].copy_from_slice(&out);
    }
    let mut result = vec![0.0; plane.len()];
    for x in 0..width {
        line.clear();
        line.extend((0..height).map(|y| rows[y * width + x]));
        sliding_median(&line, window, &mut out);
        for (y, &v) in out.iter().enumerate() {
            result[y * width + x] = v;
        }
    }
    Ok(result)
}

/// 1-D running median with a sorted window, edge-replicated.
fn sliding_median(src: &[f64], window: usize, out: &mut Vec<f64>) {
    let n = src.len() as isize;
    let r = (window / 2) as isize;
    let at = |i: isize| src[i.clamp(0, n - 1) as usize];
    let mut sorted: Vec<f64> = (-r..=r).map(at).collect();
    sorted.sort_by(f64::total_cmp);
    out.clear();
    for i in 0..n {
        if i > 0 {
            let gone = at(i - r - 1);
            let pos = sorted.partition_point(|v| v.total_cmp(&gone).is_lt());
            sorted.remove(pos);
            let new = at(i + r);
            let pos = sorted.partition_point(|v| v.total_cmp(&new).is_lt());
            sorted.insert(pos, new);
        }
        out.push(sorted[r as usize]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image() {
        let img = PixelImage::from_gray_fn(8, 8, |_, _| 90);
        assert!(noise_analysis(&img, 3).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_is_rejected() {
        let img = PixelImage::from_gray_fn(9, 9, |x, y| if (x, y) == (4, 4) { 250 } else { 50 });
        let l = img.luma();
        let f = median_row_then_column(&l, 9, 9, 3).unwrap();
        assert!(f.iter().all(|&v| v == 50.0));
        let h = noise_analysis(&img, 3).unwrap();
        assert_eq!(h.get(4, 4), 200.0);
        assert_eq!(h.values.iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn window_checks() {
        let img = PixelImage::from_gray_fn(4, 6, |_, _| 0);
        assert!(matches!(noise_analysis(&img, 5), Err(AnalysisError::WindowTooLarge { .. })));
        assert!(matches!(noise_analysis(&img, 2), Err(AnalysisError::BadWindow { .. })));
        assert!(noise_analysis(&img, 3).is_ok());
    }

    #[test]
    fn order_matters() {
        // Row-then-column differs from column-then-row on this pattern.
        let p = [0.0, 0.0, 0.0, 0.0, 9.0, 9.0, 9.0, 0.0, 9.0];
        let rc = median_row_then_column(&p, 3, 3, 3).unwrap();
        let mut t = [0.0; 9];
        for y in 0..3 {
            for x in 0..3 {
                t[x * 3 + y] = p[y * 3 + x];
            }
        }
        let cr_t = median_row_then_column(&t, 3, 3, 3).unwrap();
        let cr: Vec<f64> = (0..9).map(|i| cr_t[(i % 3) * 3 + i / 3]).collect();
        assert_ne!(rc, cr);
    }
}
