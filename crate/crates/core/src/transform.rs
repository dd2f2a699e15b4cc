//! Orthonormal 2D DCT-II / DCT-III and 2D FFT of real images.
//!
//! The DCT is computed with one complex FFT of the same length after
//! Makhoul's even/odd reordering, so any length is supported.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::image::ScalarImage;

/// Orthonormal 1D DCT-II of a fixed length.
pub struct Dct1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// `exp(-i pi k / 2n)`
    twiddle: Vec<Complex64>,
    scale: Vec<f64>,
}

impl Dct1 {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "zero-length DCT");
        let mut planner = FftPlanner::new();
        let twiddle = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64)))
            .collect();
        let scale = (0..n)
            .map(|k| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() })
            .collect();
        Self {
            n,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            twiddle,
            scale,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, data: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        let half = n.div_ceil(2);
        for k in 0..half {
            buf[k].re = data[2 * k];
        }
        for k in 0..n / 2 {
            buf[n - 1 - k].re = data[2 * k + 1];
        }
        self.fft.process(buf);
        for k in 0..n {
            data[k] = (buf[k] * self.twiddle[k]).re * self.scale[k];
        }
    }

    pub fn inverse(&self, data: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        for k in 0..n {
            let z = data[k] / self.scale[k];
            let z_mirror = if k == 0 { 0.0 } else { data[n - k] / self.scale[n - k] };
            buf[k] = Complex64::new(z, -z_mirror) * self.twiddle[k].conj();
        }
        self.ifft.process(buf);
        let inv_n = 1.0 / n as f64;
        let half = n.div_ceil(2);
        for k in 0..half {
            data[2 * k] = buf[k].re * inv_n;
        }
        for k in 0..n / 2 {
            data[2 * k + 1] = buf[n - 1 - k].re * inv_n;
        }
    }
}

/// Reusable plan for orthonormal 2D DCTs of one image shape.
pub struct Dct2Plan {
    width: usize,
    height: usize,
    rows: Dct1,
    cols: Dct1,
}

impl Dct2Plan {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rows: Dct1::new(width),
            cols: Dct1::new(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn run(&self, data: &mut [f64], inverse: bool) {
        let (w, h) = (self.width, self.height);
        assert_eq!(data.len(), w * h, "plan shape mismatch");
        let mut buf = Vec::with_capacity(w.max(h));
        for row in data.chunks_exact_mut(w) {
            if inverse {
                self.rows.inverse(row, &mut buf);
            } else {
                self.rows.forward(row, &mut buf);
            }
        }
        let mut col = vec![0.0; h];
        for x in 0..w {
            for y in 0..h {
                col[y] = data[y * w + x];
            }
            if inverse {
                self.cols.inverse(&mut col, &mut buf);
            } else {
                self.cols.forward(&mut col, &mut buf);
            }
            for y in 0..h {
                data[y * w + x] = col[y];
            }
        }
    }

    pub fn forward_in_place(&self, data: &mut [f64]) {
        self.run(data, false);
    }

    pub fn inverse_in_place(&self, data: &mut [f64]) {
        self.run(data, true);
    }

    pub fn forward(&self, img: &ScalarImage) -> ScalarImage {
        let mut out = img.clone();
        self.forward_in_place(out.data_mut());
        out
    }

    pub fn inverse(&self, coeffs: &ScalarImage) -> ScalarImage {
        let mut out = coeffs.clone();
        self.inverse_in_place(out.data_mut());
        out
    }
}

/// Orthonormal 2D DCT-II.
pub fn dct2(img: &ScalarImage) -> ScalarImage {
    Dct2Plan::new(img.width(), img.height()).forward(img)
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2(coeffs: &ScalarImage) -> ScalarImage {
    Dct2Plan::new(coeffs.width(), coeffs.height()).inverse(coeffs)
}

/// Eigenvalues of the 5-point Neumann Laplacian `-Delta` in the DCT-II basis,
/// for grid spacing `spacing`.
pub fn neumann_laplacian_symbol(width: usize, height: usize, spacing: f64) -> ScalarImage {
    let sx: Vec<f64> = (0..width)
        .map(|p| 4.0 * (PI * p as f64 / (2.0 * width as f64)).sin().powi(2))
        .collect();
    let sy: Vec<f64> = (0..height)
        .map(|q| 4.0 * (PI * q as f64 / (2.0 * height as f64)).sin().powi(2))
        .collect();
    let inv_h2 = 1.0 / (spacing * spacing);
    ScalarImage::from_fn(width, height, |p, q| (sx[p] + sy[q]) * inv_h2)
}

/// Complex 2D spectrum, row-major, orthonormally scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.data[q * self.width + p]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn fft2_in_place(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    let s = 1.0 / ((w * h) as f64).sqrt();
    data.iter_mut().for_each(|c| *c *= s);
}

pub fn fft2_real(img: &ScalarImage) -> Spectrum {
    let (w, h) = img.shape();
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut data, w, h, false);
    Spectrum {
        width: w,
        height: h,
        data,
    }
}

/// Inverse of [`fft2_real`]; the imaginary residue is discarded.
pub fn ifft2_real(spec: &Spectrum) -> ScalarImage {
    let mut data = spec.data.clone();
    fft2_in_place(&mut data, spec.width, spec.height, true);
    ScalarImage::new(spec.width, spec.height, data.iter().map(|c| c.re).collect())
        .expect("finite spectrum")
}
