//! Semi-Lagrangian transport with bilinear, clamp-to-edge interpolation,
//! and the pieces needed to differentiate through it.

use crate::error::{Error, Result};
use crate::image::{ScalarImage, VectorField};

/// T velocity fields on a uniform time grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingVelocity {
    steps: Vec<VectorField>,
}

impl TimeVaryingVelocity {
    pub fn new(steps: Vec<VectorField>) -> Result<Self> {
        let first = steps.first().ok_or(Error::EmptySequence)?;
        let (w, h) = first.shape();
        for (i, s) in steps.iter().enumerate() {
            s.ensure_shape(w, h).map_err(|e| e.in_frame(i))?;
            if !s.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite velocity at step {i}")));
            }
        }
        Ok(Self { steps })
    }

    pub fn zeros(time_steps: usize, width: usize, height: usize) -> Self {
        assert!(time_steps >= 1);
        Self {
            steps: vec![VectorField::zeros(width, height); time_steps],
        }
    }

    /// The same field at every step.
    pub fn stationary(field: VectorField, time_steps: usize) -> Self {
        assert!(time_steps >= 1);
        Self {
            steps: vec![field; time_steps],
        }
    }

    pub fn steps(&self) -> &[VectorField] {
        &self.steps
    }

    pub fn steps_mut(&mut self) -> &mut [VectorField] {
        &mut self.steps
    }

    pub fn time_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps.len() as f64
    }

    pub fn shape(&self) -> (usize, usize) {
        self.steps[0].shape()
    }

    pub fn axpy(&mut self, scale: f64, other: &TimeVaryingVelocity) {
        for (a, b) in self.steps.iter_mut().zip(&other.steps) {
            a.axpy(scale, b);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.steps.iter().all(VectorField::is_zero)
    }

    /// Largest velocity magnitude over all steps and pixels.
    pub fn max_magnitude(&self) -> f64 {
        self.steps.iter().map(VectorField::max_magnitude).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// Displacement of the map carrying time-0 positions to time 1.
    Forward,
    /// Displacement of the map carrying time-1 positions back to time 0.
    Backward,
}

/// Bilinear stencil at one position along one axis.
#[derive(Clone, Copy)]
struct Axis {
    i0: usize,
    i1: usize,
    f: f64,
    /// Right and left derivatives of the interpolation weight of `i1`,
    /// expressed as (cell start, weight) pairs.
    right: Option<usize>,
    left: Option<usize>,
}

impl Axis {
    fn new(p: f64, n: usize) -> Self {
        let last = (n - 1) as f64;
        if n == 1 {
            return Self { i0: 0, i1: 0, f: 0.0, right: None, left: None };
        }
        let c = p.clamp(0.0, last);
        let i0 = (c.floor() as usize).min(n - 2);
        let f = c - i0 as f64;
        let right = if p >= 0.0 && p < last { Some(p.floor() as usize) } else { None };
        let left = if p > 0.0 && p <= last { Some(p.ceil() as usize - 1) } else { None };
        Self { i0, i1: i0 + 1, f, right, left }
    }
}

/// Bilinear sample at `(px, py)` with clamp-to-edge.
pub(crate) struct Stencil {
    x: Axis,
    y: Axis,
}

impl Stencil {
    pub fn new(px: f64, py: f64, w: usize, h: usize) -> Self {
        Self { x: Axis::new(px, w), y: Axis::new(py, h) }
    }

    #[inline]
    pub fn sample(&self, data: &[f64], w: usize) -> f64 {
        let (x, y) = (&self.x, &self.y);
        let top = data[y.i0 * w + x.i0] * (1.0 - x.f) + data[y.i0 * w + x.i1] * x.f;
        let bot = data[y.i1 * w + x.i0] * (1.0 - x.f) + data[y.i1 * w + x.i1] * x.f;
        top * (1.0 - y.f) + bot * y.f
    }

    /// Derivative with respect to the sample position, taken as the mean
    /// of the one-sided derivatives so that it is defined on grid lines.
    #[inline]
    pub fn gradient(&self, data: &[f64], w: usize) -> (f64, f64) {
        let (x, y) = (&self.x, &self.y);
        let slope_x = |cell: usize| {
            let a = data[y.i0 * w + cell + 1] - data[y.i0 * w + cell];
            let b = data[y.i1 * w + cell + 1] - data[y.i1 * w + cell];
            a * (1.0 - y.f) + b * y.f
        };
        let slope_y = |cell: usize| {
            let a = data[(cell + 1) * w + x.i0] - data[cell * w + x.i0];
            let b = data[(cell + 1) * w + x.i1] - data[cell * w + x.i1];
            a * (1.0 - x.f) + b * x.f
        };
        let gx = 0.5 * (x.right.map_or(0.0, slope_x) + x.left.map_or(0.0, slope_x));
        let gy = 0.5 * (y.right.map_or(0.0, slope_y) + y.left.map_or(0.0, slope_y));
        (gx, gy)
    }

    /// Adds `value` times the interpolation weights into `data` (the
    /// transpose of [`Stencil::sample`]).
    #[inline]
    pub fn scatter(&self, data: &mut [f64], w: usize, value: f64) {
        let (x, y) = (&self.x, &self.y);
        data[y.i0 * w + x.i0] += value * (1.0 - x.f) * (1.0 - y.f);
        data[y.i0 * w + x.i1] += value * x.f * (1.0 - y.f);
        data[y.i1 * w + x.i0] += value * (1.0 - x.f) * y.f;
        data[y.i1 * w + x.i1] += value * x.f * y.f;
    }
}

/// `out(x) = img(x + map(x))`, bilinear with clamp-to-edge.
pub fn warp_clamped(img: &ScalarImage, map: &VectorField) -> Result<ScalarImage> {
    let (w, h) = img.shape();
    map.ensure_shape(w, h)?;
    Ok(ScalarImage::from_fn(w, h, |x, y| {
        let (dx, dy) = map.get(x, y);
        Stencil::new(x as f64 + dx, y as f64 + dy, w, h).sample(img.data(), w)
    }))
}

/// Displacement of `outer ∘ inner`: `inner(x) + outer(x + inner(x))`.
pub fn compose(outer: &VectorField, inner: &VectorField) -> Result<VectorField> {
    let (w, h) = inner.shape();
    outer.ensure_shape(w, h)?;
    let mut out = VectorField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let s = Stencil::new(x as f64 + inner.u[i], y as f64 + inner.v[i], w, h);
            out.u[i] = inner.u[i] + s.sample(&outer.u, w);
            out.v[i] = inner.v[i] + s.sample(&outer.v, w);
        }
    }
    Ok(out)
}

/// One semi-Lagrangian update `d'(x) = sign * dt * v(x) + d(x + sign * dt * v(x))`.
fn transport_step(d: &VectorField, v: &VectorField, signed_dt: f64) -> VectorField {
    let (w, h) = d.shape();
    let mut out = VectorField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (ox, oy) = (signed_dt * v.u[i], signed_dt * v.v[i]);
            let s = Stencil::new(x as f64 + ox, y as f64 + oy, w, h);
            out.u[i] = ox + s.sample(&d.u, w);
            out.v[i] = oy + s.sample(&d.v, w);
        }
    }
    out
}

/// Integrates the flow of `vel` over `[0, 1]` and returns the displacement
/// field of the requested map.
pub fn integrate_flow(vel: &TimeVaryingVelocity, direction: FlowDirection) -> VectorField {
    let (w, h) = vel.shape();
    let dt = vel.dt();
    let mut d = VectorField::zeros(w, h);
    match direction {
        FlowDirection::Backward => {
            for v in vel.steps() {
                d = transport_step(&d, v, -dt);
            }
        }
        FlowDirection::Forward => {
            for v in vel.steps().iter().rev() {
                d = transport_step(&d, v, dt);
            }
        }
    }
    d
}

/// Every backward displacement `d_0 = 0, ..., d_T` of the flow.
pub(crate) fn backward_history(vel: &TimeVaryingVelocity) -> Vec<VectorField> {
    let (w, h) = vel.shape();
    let dt = vel.dt();
    let mut hist = Vec::with_capacity(vel.time_steps() + 1);
    hist.push(VectorField::zeros(w, h));
    for v in vel.steps() {
        let next = transport_step(hist.last().expect("nonempty"), v, -dt);
        hist.push(next);
    }
    hist
}

/// Given `lambda = dJ/d d_T` for a scalar `J` of the final backward
/// displacement, returns `dJ/d v_t` for every step (plain L2 gradient).
pub(crate) fn backward_adjoint(vel: &TimeVaryingVelocity, hist: &[VectorField], mut lambda: VectorField) -> Vec<VectorField> {
    let (w, h) = vel.shape();
    let dt = vel.dt();
    let mut grads = vec![VectorField::zeros(w, h); vel.time_steps()];
    for j in (0..vel.time_steps()).rev() {
        let v = &vel.steps()[j];
        let d = &hist[j];
        let g = &mut grads[j];
        let mut next = VectorField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let s = Stencil::new(x as f64 - dt * v.u[i], y as f64 - dt * v.v[i], w, h);
                let (lu, lv) = (lambda.u[i], lambda.v[i]);
                // d_{j+1} = -dt v + S(d_j, x - dt v)
                let (dux, duy) = s.gradient(&d.u, w);
                let (dvx, dvy) = s.gradient(&d.v, w);
                g.u[i] = -dt * (lu + dux * lu + dvx * lv);
                g.v[i] = -dt * (lv + duy * lu + dvy * lv);
                s.scatter(&mut next.u, w, lu);
                s.scatter(&mut next.v, w, lv);
            }
        }
        lambda = next;
    }
    grads
}

/// Jacobian determinant of `x -> x + disp(x)` by central differences at
/// interior pixels; border pixels use one-sided differences.
pub fn jacobian_determinant(disp: &VectorField) -> ScalarImage {
    let (w, h) = disp.shape();
    let u = disp.u_image();
    let v = disp.v_image();
    let dx = |img: &ScalarImage, x: usize, y: usize| {
        let (a, b) = (x.saturating_sub(1), (x + 1).min(w - 1));
        if a == b { 0.0 } else { (img.get(b, y) - img.get(a, y)) / (b - a) as f64 }
    };
    let dy = |img: &ScalarImage, x: usize, y: usize| {
        let (a, b) = (y.saturating_sub(1), (y + 1).min(h - 1));
        if a == b { 0.0 } else { (img.get(x, b) - img.get(x, a)) / (b - a) as f64 }
    };
    ScalarImage::from_fn(w, h, |x, y| {
        (1.0 + dx(&u, x, y)) * (1.0 + dy(&v, x, y)) - dy(&u, x, y) * dx(&v, x, y)
    })
}
