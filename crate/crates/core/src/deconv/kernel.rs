use crate::error::{Error, Result};
use crate::image::ScalarImage;

/// Nonnegative, unit-sum blur kernel with odd side lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    weights: ScalarImage,
}

impl BlurKernel {
    /// Validates nonnegativity, unit sum (within 1e-10) and odd sides.
    pub fn new(weights: ScalarImage) -> Result<Self> {
        let (w, h) = weights.shape();
        if w % 2 == 0 || h % 2 == 0 {
            return Err(Error::EvenKernelSize(w, h));
        }
        if weights.data().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig("negative kernel weight".into()));
        }
        let sum = weights.sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidConfig(format!("kernel sums to {sum}")));
        }
        Ok(Self { weights })
    }

    /// Clips negative weights to zero and rescales to unit sum.
    pub fn project(weights: &ScalarImage) -> Result<Self> {
        let (w, h) = weights.shape();
        if w % 2 == 0 || h % 2 == 0 {
            return Err(Error::EvenKernelSize(w, h));
        }
        let mut clipped = weights.map(|v| v.max(0.0));
        let sum = clipped.sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::DegenerateProjection);
        }
        clipped.scale(1.0 / sum);
        Ok(Self { weights: clipped })
    }

    pub fn delta(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        Self {
            weights: ScalarImage::delta(size, size, size / 2, size / 2),
        }
    }

    pub fn weights(&self) -> &ScalarImage {
        &self.weights
    }

    pub fn into_weights(self) -> ScalarImage {
        self.weights
    }

    pub fn size(&self) -> (usize, usize) {
        self.weights.shape()
    }

    /// Intensity-weighted center, relative to the middle sample.
    pub fn centroid(&self) -> (f64, f64) {
        let (w, h) = self.size();
        let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
        let mut m = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let k = self.weights.get(x, y);
                m.0 += k * (x as f64 - cx);
                m.1 += k * (y as f64 - cy);
            }
        }
        m
    }

    /// Zero-padded to `(w, h)`, keeping the center sample centered.
    pub fn padded_to(&self, w: usize, h: usize) -> ScalarImage {
        let (kw, kh) = self.size();
        assert!(w >= kw && h >= kh && w % 2 == 1 && h % 2 == 1);
        let ox = (w - kw) / 2;
        let oy = (h - kh) / 2;
        let mut out = ScalarImage::zeros(w, h);
        for y in 0..kh {
            for x in 0..kw {
                out.set(x + ox, y + oy, self.weights.get(x, y));
            }
        }
        out
    }

    /// `(1/2) sum |a - b|` after padding to a common support.
    pub fn total_variation_distance(&self, other: &BlurKernel) -> f64 {
        let (aw, ah) = self.size();
        let (bw, bh) = other.size();
        let (w, h) = (aw.max(bw), ah.max(bh));
        let a = self.padded_to(w, h);
        let b = other.padded_to(w, h);
        0.5 * a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }
}
