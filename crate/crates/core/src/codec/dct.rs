//! Separable 8x8 DCT-II / DCT-III with JPEG normalization.
//!
//! `F(u,v) = 1/4 C(u) C(v) sum_x sum_y f(x,y) cos((2x+1)u pi/16) cos((2y+1)v pi/16)`
//! with `C(0) = 1/sqrt(2)` and `C(k) = 1` otherwise. Blocks are row-major,
//! index `y * 8 + x`; coefficient index `v * 8 + u`.

use std::sync::OnceLock;

pub type Block = [f64; 64];

/// `basis[k][n] = C(k)/2 * cos((2n+1) k pi / 16)`
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (k, row) in b.iter_mut().enumerate() {
            let c = if k == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = c / 2.0
                    * ((2 * n + 1) as f64 * k as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        b
    })
}

pub fn fdct_block(block: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp[y][u] = sum_x b[u][x] f[y][x]
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

pub fn idct_block(coeffs: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    // columns: tmp[y][u] = sum_v b[v][y] F[v][u]
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|v| b[v][y] * coeffs[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| b[u][x] * tmp[y * 8 + u]).sum();
        }
    }
    out
}
