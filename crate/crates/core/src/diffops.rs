//! Discrete differential operators with Neumann (reflecting) boundaries.
//!
//! `gradient` uses forward differences with a zero difference on the last
//! row/column; `divergence` is its exact negative adjoint, so
//! `<gradient(a), b> = -<a, divergence(b)>` holds to rounding.

use crate::image::{ScalarImage, VectorField};

pub fn gradient(img: &ScalarImage) -> VectorField {
    let (w, h) = img.shape();
    let d = img.data();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            if x + 1 < w {
                gx[i] = d[i + 1] - d[i];
            }
            if y + 1 < h {
                gy[i] = d[i + w] - d[i];
            }
        }
    }
    VectorField::new(w, h, gx, gy).expect("shape preserved")
}

pub fn divergence(field: &VectorField) -> ScalarImage {
    let (w, h) = field.shape();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut acc = 0.0;
            if x + 1 < w {
                acc += field.u[i];
            }
            if x > 0 {
                acc -= field.u[i - 1];
            }
            if y + 1 < h {
                acc += field.v[i];
            }
            if y > 0 {
                acc -= field.v[i - w];
            }
            out[i] = acc;
        }
    }
    ScalarImage::new(w, h, out).expect("shape preserved")
}

/// 5-point Laplacian with reflecting boundaries, equal to
/// `divergence(gradient(img))`.
pub fn laplacian(img: &ScalarImage) -> ScalarImage {
    let (w, h) = img.shape();
    ScalarImage::from_fn(w, h, |x, y| {
        let c = img.get(x, y);
        let mut acc = 0.0;
        if x > 0 {
            acc += img.get(x - 1, y) - c;
        }
        if x + 1 < w {
            acc += img.get(x + 1, y) - c;
        }
        if y > 0 {
            acc += img.get(x, y - 1) - c;
        }
        if y + 1 < h {
            acc += img.get(x, y + 1) - c;
        }
        acc
    })
}

/// Anisotropic total variation `||grad u||_1`.
pub fn total_variation_l1(img: &ScalarImage) -> f64 {
    let g = gradient(img);
    g.u.iter().chain(&g.v).map(|v| v.abs()).sum()
}

/// Smoothed isotropic total variation `sum sqrt(|grad u|^2 + eps^2)`.
pub fn total_variation_smoothed(img: &ScalarImage, eps: f64) -> f64 {
    let g = gradient(img);
    g.u.iter()
        .zip(&g.v)
        .map(|(a, b)| (a * a + b * b + eps * eps).sqrt())
        .sum()
}

/// Lagged diffusivity `1 / sqrt(|grad u|^2 + eps^2)` per pixel.
pub fn tv_diffusivity(img: &ScalarImage, eps: f64) -> ScalarImage {
    let g = gradient(img);
    let (w, h) = img.shape();
    let data = g
        .u
        .iter()
        .zip(&g.v)
        .map(|(a, b)| 1.0 / (a * a + b * b + eps * eps).sqrt())
        .collect();
    ScalarImage::new(w, h, data).expect("shape preserved")
}

/// `-div(weight * grad(u))`, the lagged-diffusivity TV operator.
pub fn weighted_neg_div_grad(img: &ScalarImage, weight: &ScalarImage) -> ScalarImage {
    let mut g = gradient(img);
    for (i, &wt) in weight.data().iter().enumerate() {
        g.u[i] *= wt;
        g.v[i] *= wt;
    }
    let mut d = divergence(&g);
    d.scale(-1.0);
    d
}
