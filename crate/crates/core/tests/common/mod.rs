#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use turbrest::ScalarImage;

/// Deterministic uniform values in [-0.5, 0.5).
pub fn lcg_image(w: usize, h: usize, seed: u64) -> ScalarImage {
    let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15) ^ 0xd1b54a32d192ed03;
    ScalarImage::from_fn(w, h, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
}

/// Materializes a linear operator on `w x h` images column by column.
pub fn dense_matrix(w: usize, h: usize, op: impl Fn(&ScalarImage) -> ScalarImage) -> DMatrix<f64> {
    let n = w * h;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = ScalarImage::zeros(w, h);
        e.data_mut()[j] = 1.0;
        for (i, v) in op(&e).data().iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

pub fn dense_solve(m: &DMatrix<f64>, rhs: &ScalarImage) -> Vec<f64> {
    m.clone()
        .lu()
        .solve(&DVector::from_column_slice(rhs.data()))
        .expect("nonsingular")
        .iter()
        .copied()
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    (m - m.transpose()).amax() / scale
}
