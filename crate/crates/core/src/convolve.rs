//! Spatial convolution with an explicit boundary rule, plus the exact
//! transposes needed by the deconvolution normal equations.

use crate::error::{Error, Result};
use crate::image::{BoundaryRule, ScalarImage};

pub(crate) fn check_kernel_fits(img: &ScalarImage, kernel: &ScalarImage) -> Result<()> {
    let (kw, kh) = kernel.shape();
    if kw % 2 == 0 || kh % 2 == 0 {
        return Err(Error::EvenKernelSize(kw, kh));
    }
    if kw > img.width() || kh > img.height() {
        return Err(Error::KernelTooLarge {
            kernel_width: kw,
            kernel_height: kh,
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

/// Image extended by `(rx, ry)` pixels on every side according to `rule`.
pub(crate) struct Padded {
    pub data: Vec<f64>,
    pub stride: usize,
}

impl Padded {
    pub fn new(img: &ScalarImage, rx: usize, ry: usize, rule: BoundaryRule) -> Self {
        let (w, h) = img.shape();
        let stride = w + 2 * rx;
        let mut data = Vec::with_capacity(stride * (h + 2 * ry));
        for py in 0..h + 2 * ry {
            let sy = rule.index(py as isize - ry as isize, h);
            for px in 0..stride {
                let sx = rule.index(px as isize - rx as isize, w);
                data.push(img.get(sx, sy));
            }
        }
        Self { data, stride }
    }
}

/// True convolution `out(p) = sum_q kernel(q) img(p - q)` with the kernel
/// centered on its middle sample; the output has the image shape.
pub fn convolve(img: &ScalarImage, kernel: &ScalarImage, rule: BoundaryRule) -> Result<ScalarImage> {
    check_kernel_fits(img, kernel)?;
    Ok(convolve_unchecked(img, kernel, rule))
}

pub(crate) fn convolve_unchecked(img: &ScalarImage, kernel: &ScalarImage, rule: BoundaryRule) -> ScalarImage {
    let (w, h) = img.shape();
    let (kw, kh) = kernel.shape();
    let (rx, ry) = (kw / 2, kh / 2);
    let pad = Padded::new(img, rx, ry, rule);
    let mut out = vec![0.0; w * h];
    for b in 0..kh {
        for a in 0..kw {
            let k = kernel.get(a, b);
            if k == 0.0 {
                continue;
            }
            // img(p - q) with q = (a - rx, b - ry): padded offset (rx - (a-rx)) = 2rx - a
            let ox = 2 * rx - a;
            let oy = 2 * ry - b;
            for y in 0..h {
                let src = &pad.data[(y + oy) * pad.stride + ox..][..w];
                let dst = &mut out[y * w..(y + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += k * s;
                }
            }
        }
    }
    ScalarImage::new(w, h, out).expect("shape preserved")
}

/// Exact transpose of `x -> convolve(x, kernel, rule)`, including the
/// boundary folding.
pub fn convolve_adjoint(img: &ScalarImage, kernel: &ScalarImage, rule: BoundaryRule) -> Result<ScalarImage> {
    check_kernel_fits(img, kernel)?;
    Ok(convolve_adjoint_unchecked(img, kernel, rule))
}

pub(crate) fn convolve_adjoint_unchecked(r: &ScalarImage, kernel: &ScalarImage, rule: BoundaryRule) -> ScalarImage {
    let (w, h) = r.shape();
    let (kw, kh) = kernel.shape();
    let (rx, ry) = (kw / 2, kh / 2);
    // Accumulate into a padded buffer, then fold the margins back.
    let stride = w + 2 * rx;
    let ph = h + 2 * ry;
    let mut acc = vec![0.0; stride * ph];
    for b in 0..kh {
        for a in 0..kw {
            let k = kernel.get(a, b);
            if k == 0.0 {
                continue;
            }
            let ox = 2 * rx - a;
            let oy = 2 * ry - b;
            for y in 0..h {
                let src = &r.data()[y * w..(y + 1) * w];
                let dst = &mut acc[(y + oy) * stride + ox..][..w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += k * s;
                }
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for py in 0..ph {
        let sy = rule.index(py as isize - ry as isize, h);
        for px in 0..stride {
            let sx = rule.index(px as isize - rx as isize, w);
            out[sy * w + sx] += acc[py * stride + px];
        }
    }
    ScalarImage::new(w, h, out).expect("shape preserved")
}

/// The blur as a linear map of the kernel for a fixed image:
/// `kernel -> convolve(img, kernel, rule)`.
pub(crate) struct KernelOperator {
    pad: Padded,
    width: usize,
    height: usize,
    kw: usize,
    kh: usize,
}

impl KernelOperator {
    pub fn new(img: &ScalarImage, kw: usize, kh: usize, rule: BoundaryRule) -> Self {
        Self {
            pad: Padded::new(img, kw / 2, kh / 2, rule),
            width: img.width(),
            height: img.height(),
            kw,
            kh,
        }
    }

    pub fn apply(&self, kernel: &ScalarImage) -> ScalarImage {
        let (w, h) = (self.width, self.height);
        let (rx, ry) = (self.kw / 2, self.kh / 2);
        let mut out = vec![0.0; w * h];
        for b in 0..self.kh {
            for a in 0..self.kw {
                let k = kernel.get(a, b);
                if k == 0.0 {
                    continue;
                }
                let ox = 2 * rx - a;
                let oy = 2 * ry - b;
                for y in 0..h {
                    let src = &self.pad.data[(y + oy) * self.pad.stride + ox..][..w];
                    for (d, s) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                        *d += k * s;
                    }
                }
            }
        }
        ScalarImage::new(w, h, out).expect("shape preserved")
    }

    /// `(A^T r)(a, b) = sum_p r(p) img_ext(p - q(a, b))`.
    pub fn apply_adjoint(&self, r: &ScalarImage) -> ScalarImage {
        let (w, h) = (self.width, self.height);
        let (rx, ry) = (self.kw / 2, self.kh / 2);
        let mut out = ScalarImage::zeros(self.kw, self.kh);
        for b in 0..self.kh {
            for a in 0..self.kw {
                let ox = 2 * rx - a;
                let oy = 2 * ry - b;
                let mut acc = 0.0;
                for y in 0..h {
                    let src = &self.pad.data[(y + oy) * self.pad.stride + ox..][..w];
                    acc += src.iter().zip(&r.data()[y * w..(y + 1) * w]).map(|(s, q)| s * q).sum::<f64>();
                }
                out.set(a, b, acc);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_image(w: usize, h: usize, seed: u64) -> ScalarImage {
        let mut s = seed ^ 0x9e3779b97f4a7c15;
        ScalarImage::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    /// Direct nested-loop definition, independent of the padded fast path.
    fn convolve_oracle(img: &ScalarImage, k: &ScalarImage, rule: BoundaryRule) -> ScalarImage {
        let (rx, ry) = (k.width() as isize / 2, k.height() as isize / 2);
        ScalarImage::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for b in 0..k.height() {
                for a in 0..k.width() {
                    let qx = a as isize - rx;
                    let qy = b as isize - ry;
                    acc += k.get(a, b) * img.get_ext(x as isize - qx, y as isize - qy, rule);
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernels() {
        let img = lcg_image(9, 8, 1);
        let one = ScalarImage::filled(1, 1, 1.0);
        assert_eq!(convolve(&img, &one, BoundaryRule::Reflect).unwrap(), img);
        let delta = ScalarImage::delta(3, 3, 1, 1);
        assert_eq!(convolve(&img, &delta, BoundaryRule::Clamp).unwrap(), img);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        for rule in [BoundaryRule::Reflect, BoundaryRule::Clamp] {
            let img = lcg_image(16, 16, 7);
            let k = lcg_image(5, 5, 8);
            let fast = convolve(&img, &k, rule).unwrap();
            let slow = convolve_oracle(&img, &k, rule);
            assert!(fast.max_abs_diff(&slow) < 1e-12);
        }
    }

    #[test]
    fn kernel_is_flipped() {
        // Asymmetric kernel: weight at offset (+1, 0) moves content right.
        let mut k = ScalarImage::zeros(3, 3);
        k.set(2, 1, 1.0);
        let img = ScalarImage::from_fn(6, 3, |x, _| x as f64);
        let out = convolve(&img, &k, BoundaryRule::Clamp).unwrap();
        assert_eq!(out.get(3, 1), 2.0);
    }

    #[test]
    fn adjoint_matches_transpose() {
        for rule in [BoundaryRule::Reflect, BoundaryRule::Clamp] {
            let x = lcg_image(7, 6, 3);
            let r = lcg_image(7, 6, 4);
            let k = lcg_image(5, 3, 5);
            let lhs = convolve(&x, &k, rule).unwrap().dot(&r);
            let rhs = x.dot(&convolve_adjoint(&r, &k, rule).unwrap());
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
        }
    }

    #[test]
    fn kernel_operator_agrees_with_convolve() {
        let img = lcg_image(10, 9, 11);
        let k = lcg_image(5, 5, 12);
        let op = KernelOperator::new(&img, 5, 5, BoundaryRule::Reflect);
        assert!(op.apply(&k).max_abs_diff(&convolve(&img, &k, BoundaryRule::Reflect).unwrap()) < 1e-13);
        let r = lcg_image(10, 9, 13);
        let lhs = op.apply(&k).dot(&r);
        let rhs = k.dot(&op.apply_adjoint(&r));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn contract_errors() {
        let img = lcg_image(4, 4, 1);
        assert!(matches!(
            convolve(&img, &ScalarImage::zeros(2, 3), BoundaryRule::Reflect),
            Err(Error::EvenKernelSize(2, 3))
        ));
        assert!(matches!(
            convolve(&img, &ScalarImage::zeros(5, 3), BoundaryRule::Reflect),
            Err(Error::KernelTooLarge { .. })
        ));
    }
}
