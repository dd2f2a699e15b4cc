//! Bilinear sampling and backward warping.

use crate::error::Result;
use crate::image::{BoundaryRule, ScalarImage, VectorField};

/// Bilinear interpolation of `img` at the continuous position `(x, y)`.
/// Integer coordinates address pixel centers.
pub fn sample_bilinear(img: &ScalarImage, x: f64, y: f64, rule: BoundaryRule) -> f64 {
    let (w, h) = img.shape();
    let x = rule.coord(x, w);
    let y = rule.coord(y, h);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Backward warp: `out(x, y) = img(x + u(x, y), y + v(x, y))`.
pub fn warp(img: &ScalarImage, map: &VectorField, rule: BoundaryRule) -> Result<ScalarImage> {
    let (w, h) = img.shape();
    map.ensure_shape(w, h)?;
    Ok(ScalarImage::from_fn(w, h, |x, y| {
        let (dx, dy) = map.get(x, y);
        sample_bilinear(img, x as f64 + dx, y as f64 + dy, rule)
    }))
}
