//! Grid containers shared by every stage: scalar images, 2-vector fields and
//! the boundary rule used when an operator reads outside the domain.

use crate::error::{Error, Result};

/// How samples outside `[0, n)` are mapped back into the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryRule {
    /// Half-sample symmetric reflection: `x[-1] = x[0]`, `x[n] = x[n-1]`.
    /// This is the extension under which reflected convolutions are
    /// diagonalized by the DCT-II.
    #[default]
    Reflect,
    /// Repeat the edge sample.
    Clamp,
}

impl BoundaryRule {
    /// Maps an integer index into `0..n`.
    #[inline]
    pub fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            BoundaryRule::Clamp => i.clamp(0, n - 1) as usize,
            BoundaryRule::Reflect => {
                let period = 2 * n;
                let m = i.rem_euclid(period);
                (if m >= n { period - 1 - m } else { m }) as usize
            }
        }
    }

    /// Maps a continuous coordinate into `[0, n-1]`.
    #[inline]
    pub fn coord(self, x: f64, n: usize) -> f64 {
        let last = (n - 1) as f64;
        match self {
            BoundaryRule::Clamp => x.clamp(0.0, last),
            BoundaryRule::Reflect => {
                let period = 2.0 * n as f64;
                let mut t = (x + 0.5).rem_euclid(period);
                if t > n as f64 {
                    t = period - t;
                }
                (t - 0.5).clamp(0.0, last)
            }
        }
    }
}

/// Single-channel image with real intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ShapeMismatch(format!(
                "image sides must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Unit impulse at `(x, y)`.
    pub fn delta(width: usize, height: usize, x: usize, y: usize) -> Self {
        let mut img = Self::zeros(width, height);
        img.set(x, y, 1.0);
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Reads `(x, y)` with out-of-range indices mapped by `rule`.
    #[inline]
    pub fn get_ext(&self, x: isize, y: isize, rule: BoundaryRule) -> f64 {
        self.get(rule.index(x, self.width), rule.index(y, self.height))
    }

    pub fn same_shape(&self, other: &ScalarImage) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &ScalarImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarImage, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.same_shape(other), "shape mismatch in zip_map");
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn dot(&self, other: &ScalarImage) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs_diff(&self, other: &ScalarImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &ScalarImage) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the `w x h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }
}

/// Two-channel grid of displacements or velocities, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || u.len() != width * height || v.len() != width * height
        {
            return Err(Error::ShapeMismatch(format!(
                "field channels of length {} and {} for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, a: f64, b: f64) -> Self {
        assert!(width > 0 && height > 0, "empty field");
        Self {
            width,
            height,
            u: vec![a; width * height],
            v: vec![b; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut out = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                out.u[y * width + x] = a;
                out.v[y * width + x] = b;
            }
        }
        out
    }

    pub fn from_channels(u: ScalarImage, v: ScalarImage) -> Result<Self> {
        u.ensure_same_shape(&v)?;
        let (w, h) = u.shape();
        Self::new(w, h, u.into_data(), v.into_data())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.u.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn u_image(&self) -> ScalarImage {
        ScalarImage::new(self.width, self.height, self.u.clone()).expect("valid channel")
    }

    pub fn v_image(&self) -> ScalarImage {
        ScalarImage::new(self.width, self.height, self.v.clone()).expect("valid channel")
    }

    pub fn ensure_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.shape() == (width, height) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "field {}x{} vs image {width}x{height}",
                self.width, self.height
            )))
        }
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        let du: f64 = self.u.iter().zip(&other.u).map(|(a, b)| a * b).sum();
        let dv: f64 = self.v.iter().zip(&other.v).map(|(a, b)| a * b).sum();
        du + dv
    }

    pub fn axpy(&mut self, scale: f64, other: &VectorField) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += scale * b;
        }
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.u.iter_mut().for_each(|x| *x *= s);
        self.v.iter_mut().for_each(|x| *x *= s);
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.u.iter().zip(&self.v).map(|(a, b)| a.hypot(*b))
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes().fold(0.0, f64::max)
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.magnitudes().sum::<f64>() / self.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&v| v == 0.0)
    }
}
