use serde::{Deserialize, Serialize};

use super::{minmax, AnalysisError, Heatmap, Normalization};
use crate::codec::PixelImage;

const JACOBI_TOL: f64 = 1e-9;
/// Eigenvalues at or below `RANK_TOL * max(trace, 1)` count as zero.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub mean: [f64; 3],
    /// Population covariance (divided by N).
    pub covariance: [[f64; 3]; 3],
    /// Descending.
    pub eigenvalues: [f64; 3],
    /// `eigenvectors[k]` pairs with `eigenvalues[k]`; unit length, largest
    /// magnitude loading positive.
    pub eigenvectors: [[f64; 3]; 3],
}

impl PcaResult {
    pub fn rank(&self) -> usize {
        let tr: f64 = self.eigenvalues.iter().sum();
        let tol = RANK_TOL * tr.max(1.0);
        self.eigenvalues.iter().filter(|&&l| l > tol).count()
    }
}

/// Mean, covariance and eigen-decomposition of the RGB pixel cloud.
pub fn pca_eigen(img: &PixelImage) -> PcaResult {
    let rgb = img.to_rgb();
    let n = rgb.pixel_count().max(1) as f64;
    let p = [&rgb.planes[0].data, &rgb.planes[1].data, &rgb.planes[2].data];
    let mut mean = [0.0; 3];
    for c in 0..3 {
        mean[c] = p[c].iter().map(|&v| v as f64).sum::<f64>() / n;
    }
    let mut cov = [[0.0; 3]; 3];
    for i in 0..rgb.pixel_count() {
        let d = [p[0][i] as f64 - mean[0], p[1][i] as f64 - mean[1], p[2][i] as f64 - mean[2]];
        for a in 0..3 {
            for b in a..3 {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    for a in 0..3 {
        for b in a..3 {
            cov[a][b] /= n;
            cov[b][a] = cov[a][b];
        }
    }
    let (values, vectors) = jacobi3(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut eigenvalues = [0.0; 3];
    let mut eigenvectors = [[0.0; 3]; 3];
    for (k, &i) in order.iter().enumerate() {
        eigenvalues[k] = values[i].max(0.0);
        let mut v = [vectors[0][i], vectors[1][i], vectors[2][i]];
        let big = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvectors[k] = v;
    }
    PcaResult {
        mean,
        covariance: cov,
        eigenvalues,
        eigenvectors,
    }
}

/// Cyclic Jacobi rotations; returns eigenvalues and column eigenvectors.
fn jacobi3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off <= JACOBI_TOL * 1e-6 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Min-max scaled |projection| of each centred pixel onto eigenvector
/// `component` (1-based, by descending eigenvalue).
pub fn pca_projection(img: &PixelImage, component: usize) -> Result<Heatmap, AnalysisError> {
    if !(1..=3).contains(&component) {
        return Err(AnalysisError::BadComponent(component));
    }
    let r = pca_eigen(img);
    if component > r.rank() {
        return Err(AnalysisError::DegenerateCovariance { component });
    }
    let v = r.eigenvectors[component - 1];
    let rgb = img.to_rgb();
    let p = [&rgb.planes[0].data, &rgb.planes[1].data, &rgb.planes[2].data];
    let proj: Vec<f64> = (0..rgb.pixel_count())
        .map(|i| {
            (0..3)
                .map(|c| (p[c][i] as f64 - r.mean[c]) * v[c])
                .sum::<f64>()
                .abs()
        })
        .collect();
    Ok(Heatmap::new(img.width, img.height, minmax(&proj), Normalization::MinmaxScaled))
}
