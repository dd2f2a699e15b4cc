//! The Cauchy-Navier operator `L = -alpha Delta + gamma`, applied channel-wise
//! and diagonalized by the DCT-II under Neumann boundaries.

use crate::error::{Error, Result};
use crate::image::{ScalarImage, VectorField};
use crate::transform::{neumann_laplacian_symbol, Dct2Plan};

pub const ALPHA_RANGE: (f64, f64) = (0.01, 0.3);
pub const GAMMA_RANGE: (f64, f64) = (0.1, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyNavierParams {
    /// Weight of the Laplacian.
    pub alpha: f64,
    /// Weight of the identity.
    pub gamma: f64,
    /// Distance between pixel centers used by the Laplacian.
    pub grid_spacing: f64,
}

impl Default for CauchyNavierParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            gamma: 0.7,
            grid_spacing: 1.0 / 32.0,
        }
    }
}

impl CauchyNavierParams {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        Self {
            alpha,
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.gamma > 0.0) || !(self.grid_spacing > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need alpha >= 0, gamma > 0, grid_spacing > 0 (got {}, {}, {})",
                self.alpha, self.gamma, self.grid_spacing
            )));
        }
        Ok(())
    }

    /// Departures from the recommended parameter box; never fatal.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.alpha < ALPHA_RANGE.0 || self.alpha > ALPHA_RANGE.1 {
            out.push(format!(
                "alpha={} outside recommended range [{}, {}]",
                self.alpha, ALPHA_RANGE.0, ALPHA_RANGE.1
            ));
        }
        if self.gamma < GAMMA_RANGE.0 || self.gamma > GAMMA_RANGE.1 {
            out.push(format!(
                "gamma={} outside recommended range [{}, {}]",
                self.gamma, GAMMA_RANGE.0, GAMMA_RANGE.1
            ));
        }
        if self.alpha >= self.gamma {
            out.push(format!("alpha={} is not below gamma={}", self.alpha, self.gamma));
        }
        out
    }

    /// Per-frequency multiplier `gamma + alpha * lambda_k` of `L`.
    pub fn symbol(&self, width: usize, height: usize) -> ScalarImage {
        neumann_laplacian_symbol(width, height, self.grid_spacing).map(|l| self.gamma + self.alpha * l)
    }
}

/// Cached transform and symbol for repeated use on one grid.
pub struct CauchyNavier {
    plan: Dct2Plan,
    symbol: ScalarImage,
}

impl CauchyNavier {
    pub fn new(width: usize, height: usize, params: &CauchyNavierParams) -> Self {
        Self {
            plan: Dct2Plan::new(width, height),
            symbol: params.symbol(width, height),
        }
    }

    fn filter(&self, img: &ScalarImage, f: impl Fn(f64) -> f64) -> ScalarImage {
        let mut c = self.plan.forward(img);
        for (v, s) in c.data_mut().iter_mut().zip(self.symbol.data()) {
            *v *= f(*s);
        }
        self.plan.inverse(&c)
    }

    fn filter_field(&self, field: &VectorField, f: impl Fn(f64) -> f64 + Copy) -> VectorField {
        VectorField::from_channels(self.filter(&field.u_image(), f), self.filter(&field.v_image(), f))
            .expect("shape preserved")
    }

    pub fn apply(&self, field: &VectorField) -> VectorField {
        self.filter_field(field, |s| s)
    }

    /// `L^T L`.
    pub fn apply_normal(&self, field: &VectorField) -> VectorField {
        self.filter_field(field, |s| s * s)
    }

    /// `K = (L^T L)^{-1}`.
    pub fn smooth(&self, field: &VectorField) -> VectorField {
        self.filter_field(field, |s| 1.0 / (s * s))
    }

    /// `<f, f>_V` computed from DCT coefficients.
    pub fn norm_sq(&self, field: &VectorField) -> f64 {
        sum_sq(&self.spectrum(field))
    }

    /// DCT coefficients of `L u` followed by those of `L v`; `L` is
    /// orthogonally diagonalized, so the V norm is the plain sum of squares.
    pub(crate) fn spectrum(&self, field: &VectorField) -> Vec<f64> {
        let n = field.u.len();
        let mut out = Vec::with_capacity(2 * n);
        out.extend_from_slice(&field.u);
        out.extend_from_slice(&field.v);
        for ch in out.chunks_exact_mut(n) {
            self.plan.forward_in_place(ch);
            for (a, s) in ch.iter_mut().zip(self.symbol.data()) {
                *a *= s;
            }
        }
        out
    }

    pub fn inner(&self, f: &VectorField, g: &VectorField) -> f64 {
        let mut acc = 0.0;
        for (a, b) in [(f.u_image(), g.u_image()), (f.v_image(), g.v_image())] {
            let ca = self.plan.forward(&a);
            let cb = self.plan.forward(&b);
            acc += ca
                .data()
                .iter()
                .zip(cb.data())
                .zip(self.symbol.data())
                .map(|((x, y), s)| x * y * s * s)
                .sum::<f64>();
        }
        acc
    }
}

pub(crate) fn sum_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `<L f, L g>` summed over pixels and both channels.
pub fn cn_inner_product(f: &VectorField, g: &VectorField, params: &CauchyNavierParams) -> Result<f64> {
    g.ensure_shape(f.width(), f.height())?;
    Ok(CauchyNavier::new(f.width(), f.height(), params).inner(f, g))
}

/// Applies `K = (L^T L)^{-1}`, turning an L2 gradient into a V gradient.
pub fn smooth_gradient(raw_gradient: &VectorField, params: &CauchyNavierParams) -> VectorField {
    CauchyNavier::new(raw_gradient.width(), raw_gradient.height(), params).smooth(raw_gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffops::laplacian;

    fn lcg_field(w: usize, h: usize, seed: u64) -> VectorField {
        let mut s = seed ^ 0x2545f4914f6cdd1d;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let u = ScalarImage::from_fn(w, h, |_, _| next());
        let v = ScalarImage::from_fn(w, h, |_, _| next());
        VectorField::from_channels(u, v).unwrap()
    }

    /// `(-alpha Delta + gamma) f` with the spatial Neumann stencil.
    fn stencil(f: &ScalarImage, p: &CauchyNavierParams) -> ScalarImage {
        let lap = laplacian(f);
        let inv_h2 = 1.0 / (p.grid_spacing * p.grid_spacing);
        f.zip_map(&lap, |a, l| p.gamma * a - p.alpha * l * inv_h2)
    }

    #[test]
    fn alpha_zero_is_scaled_l2() {
        let f = lcg_field(9, 7, 1);
        let g = lcg_field(9, 7, 2);
        let p = CauchyNavierParams::new(0.0, 0.7);
        let ip = cn_inner_product(&f, &g, &p).unwrap();
        assert!((ip - 0.49 * f.dot(&g)).abs() < 1e-12);
    }

    #[test]
    fn constant_field_norm() {
        let c = VectorField::constant(8, 6, 0.3, -1.2);
        let p = CauchyNavierParams::new(0.2, 0.7);
        let n = cn_inner_product(&c, &c, &p).unwrap();
        let expect = 0.49 * 48.0 * (0.09 + 1.44);
        assert!((n - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn matches_spatial_stencil() {
        for spacing in [1.0, 0.125] {
            let p = CauchyNavierParams { alpha: 0.05, gamma: 0.6, grid_spacing: spacing };
            let f = lcg_field(10, 8, 3);
            let g = lcg_field(10, 8, 4);
            let spatial = stencil(&f.u_image(), &p).dot(&stencil(&g.u_image(), &p))
                + stencil(&f.v_image(), &p).dot(&stencil(&g.v_image(), &p));
            let spectral = cn_inner_product(&f, &g, &p).unwrap();
            assert!((spatial - spectral).abs() < 1e-8 * spatial.abs());
        }
    }

    #[test]
    fn smoothing_inverts_normal_operator() {
        let p = CauchyNavierParams { alpha: 0.1, gamma: 0.5, grid_spacing: 0.5 };
        let f = lcg_field(12, 9, 5);
        let op = CauchyNavier::new(12, 9, &p);
        let back = smooth_gradient(&op.apply_normal(&f), &p);
        let mut d = back.clone();
        d.axpy(-1.0, &f);
        assert!(d.dot(&d).sqrt() < 1e-8 * f.dot(&f).sqrt());
        let id = CauchyNavierParams::new(0.0, 1.0);
        let same = smooth_gradient(&f, &id);
        let mut d = same;
        d.axpy(-1.0, &f);
        assert!(d.dot(&d).sqrt() < 1e-12);
    }

    #[test]
    fn impulse_response_decays_along_axes() {
        let p = CauchyNavierParams { alpha: 0.3, gamma: 0.7, grid_spacing: 1.0 };
        let mut u = ScalarImage::zeros(33, 33);
        u.set(16, 16, 1.0);
        let f = VectorField::from_channels(u, ScalarImage::zeros(33, 33)).unwrap();
        let k = smooth_gradient(&f, &p).u_image();
        for d in 0..15 {
            assert!(k.get(16 + d, 16) > k.get(17 + d, 16));
            assert!(k.get(16, 16 - d) > k.get(16, 15 - d));
        }
        assert!(k.get(16, 16) > 0.0);
    }

    #[test]
    fn parameter_box_warnings() {
        assert!(CauchyNavierParams::new(0.01, 0.7).warnings().is_empty());
        assert_eq!(CauchyNavierParams::new(0.5, 0.7).warnings().len(), 1);
        assert_eq!(CauchyNavierParams::new(0.2, 0.15).warnings().len(), 1);
        assert_eq!(CauchyNavierParams::new(0.005, 1.5).warnings().len(), 2);
    }
}
