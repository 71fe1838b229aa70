use super::{Heatmap, Normalization};
use crate::codec::PixelImage;

/// Gradient magnitude of BT.601 luma: central differences inside,
/// one-sided differences on the border.
pub fn luminance_gradient(img: &PixelImage) -> Heatmap {
    let (w, h) = (img.width, img.height);
    let l = img.luma();
    let at = |x: usize, y: usize| l[y * w + x];
    let diff = |n: usize, i: usize, get: &dyn Fn(usize) -> f64| -> f64 {
        if n < 2 {
            0.0
        } else if i == 0 {
            get(1) - get(0)
        } else if i == n - 1 {
            get(n - 1) - get(n - 2)
        } else {
            (get(i + 1) - get(i - 1)) / 2.0
        }
    };
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = diff(w, x, &|i| at(i, y));
            let gy = diff(h, y, &|j| at(x, j));
            values.push((gx * gx + gy * gy).sqrt());
        }
    }
    Heatmap::new(w, h, values, Normalization::Raw)
}
