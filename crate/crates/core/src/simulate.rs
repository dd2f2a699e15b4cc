//! Seeded forward model `observed_n = warp_n(blur(clean)) + noise_n`.
//!
//! Randomness comes from ChaCha8 keyed by the 64-bit seed, with frame `n`
//! drawn from stream `n`, so frames are independent and any single frame
//! can be regenerated on its own. Normal deviates use the Box-Muller
//! transform on 53-bit uniforms, which keeps the output identical across
//! platforms.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::convolve::convolve;
use crate::deconv::BlurKernel;
use crate::error::{Error, Result};
use crate::image::{BoundaryRule, ScalarImage, VectorField};
use crate::sampling::warp;
use crate::temporal::Sequence;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub frames: usize,
    /// Standard deviation of the Gaussian blur, in pixels.
    pub blur_sigma: f64,
    /// Largest displacement magnitude of every warp, in pixels.
    pub warp_amplitude: f64,
    /// Standard deviation of the Gaussian that smooths the warp noise, in pixels.
    pub warp_correlation_length: f64,
    /// Standard deviation of the additive pixel noise.
    pub noise_sigma: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            frames: 20,
            blur_sigma: 1.0,
            warp_amplitude: 2.0,
            warp_correlation_length: 8.0,
            noise_sigma: 0.01,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        if !(self.blur_sigma >= 0.0) {
            return bad("blur_sigma must be nonnegative");
        }
        if !(self.warp_amplitude >= 0.0) {
            return bad("warp_amplitude must be nonnegative");
        }
        if !(self.warp_correlation_length > 0.0) {
            return bad("warp_correlation_length must be positive");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub clean: ScalarImage,
    pub kernel: BlurKernel,
    /// Per frame: `degraded(x) = blurred(x + warp(x))`.
    pub warps: Vec<VectorField>,
    pub degraded: Sequence,
}

/// Odd support that holds a Gaussian of width `sigma` out to three sigmas.
pub fn kernel_size_for(sigma: f64) -> usize {
    2 * (3.0 * sigma).ceil() as usize + 1
}

/// Sampled isotropic Gaussian normalized to unit sum; `sigma = 0` gives a delta.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Result<BlurKernel> {
    if size % 2 == 0 {
        return Err(Error::EvenKernelSize(size, size));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("negative sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(BlurKernel::delta(size));
    }
    let c = (size / 2) as f64;
    let mut w = ScalarImage::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    });
    let s = w.sum();
    w.scale(1.0 / s);
    BlurKernel::new(w)
}

/// Separable Gaussian smoothing; the support may exceed the image because
/// indices are folded by `rule`.
pub fn gaussian_smooth(img: &ScalarImage, sigma: f64, rule: BoundaryRule) -> ScalarImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();
    let (w, h) = img.shape();
    let rows = ScalarImage::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * img.get_ext(x as isize + i as isize - r, y as isize, rule))
            .sum()
    });
    ScalarImage::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * rows.get_ext(x as isize, y as isize + i as isize - r, rule))
            .sum()
    })
}

/// Standard normal deviates from a ChaCha8 stream.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn image(&mut self, w: usize, h: usize) -> ScalarImage {
        ScalarImage::from_fn(w, h, |_, _| self.next())
    }
}

/// Smooth, zero-mean random displacement field whose largest magnitude is
/// exactly `amplitude`.
pub fn random_warp(
    noise: &mut NormalStream,
    w: usize,
    h: usize,
    amplitude: f64,
    correlation_length: f64,
) -> VectorField {
    let mut u = gaussian_smooth(&noise.image(w, h), correlation_length, BoundaryRule::Reflect);
    let mut v = gaussian_smooth(&noise.image(w, h), correlation_length, BoundaryRule::Reflect);
    let (mu, mv) = (u.mean(), v.mean());
    u = u.map(|a| a - mu);
    v = v.map(|a| a - mv);
    let mut field = VectorField::from_channels(u, v).expect("same shape");
    let peak = field.max_magnitude();
    if amplitude == 0.0 || peak == 0.0 {
        return VectorField::zeros(w, h);
    }
    field.scale(amplitude / peak);
    field
}

pub fn simulate(clean: &ScalarImage, cfg: &SimConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let (w, h) = clean.shape();
    let mut size = kernel_size_for(cfg.blur_sigma);
    let largest = if w.min(h) % 2 == 1 { w.min(h) } else { w.min(h) - 1 };
    size = size.min(largest);
    let kernel = gaussian_kernel(cfg.blur_sigma, size)?;
    let blurred = convolve(clean, kernel.weights(), BoundaryRule::Reflect)?;
    let mut warps = Vec::with_capacity(cfg.frames);
    let mut frames = Vec::with_capacity(cfg.frames);
    for n in 0..cfg.frames {
        let mut noise = NormalStream::new(cfg.seed, n as u64);
        let field = random_warp(&mut noise, w, h, cfg.warp_amplitude, cfg.warp_correlation_length);
        let mut frame = if field.is_zero() {
            blurred.clone()
        } else {
            warp(&blurred, &field, BoundaryRule::Reflect)?
        };
        if cfg.noise_sigma > 0.0 {
            for v in frame.data_mut() {
                *v += cfg.noise_sigma * noise.next();
            }
        }
        warps.push(field);
        frames.push(frame);
    }
    Ok(GroundTruth {
        clean: clean.clone(),
        kernel,
        warps,
        degraded: Sequence::new(frames)?,
    })
}

/// Piecewise-constant test card: bars, checkerboards, disks and a wedge on
/// a mid-gray background, intensities in `[0.1, 0.9]`.
pub fn test_card(width: usize, height: usize) -> ScalarImage {
    let s = width.min(height) as f64 / 128.0;
    ScalarImage::from_fn(width, height, |xi, yi| {
        let (x, y) = (xi as f64 / s, yi as f64 / s);
        let inside = |x0: f64, y0: f64, x1: f64, y1: f64| x >= x0 && x < x1 && y >= y0 && y < y1;
        let disk = |cx: f64, cy: f64, r: f64| (x - cx).powi(2) + (y - cy).powi(2) <= r * r;
        if inside(8.0, 8.0, 56.0, 40.0) {
            // vertical bars of widening pitch
            let pitch = if x < 24.0 { 2.0 } else if x < 40.0 { 4.0 } else { 8.0 };
            return if ((x - 8.0) / pitch).floor() as i64 % 2 == 0 { 0.9 } else { 0.1 };
        }
        if inside(72.0, 8.0, 120.0, 56.0) {
            let c = ((x - 72.0) / 8.0).floor() as i64 + ((y - 8.0) / 8.0).floor() as i64;
            return if c % 2 == 0 { 0.8 } else { 0.2 };
        }
        if disk(32.0, 84.0, 20.0) {
            return if disk(32.0, 84.0, 9.0) { 0.15 } else { 0.85 };
        }
        if inside(64.0, 72.0, 120.0, 120.0) && (y - 72.0) > 0.6 * (x - 64.0) {
            return 0.9;
        }
        if inside(8.0, 48.0, 56.0, 58.0) {
            // horizontal bars
            return if ((y - 48.0) / 2.0).floor() as i64 % 2 == 0 { 0.2 } else { 0.75 };
        }
        if disk(96.0, 100.0, 6.0) || disk(112.0, 84.0, 3.0) || disk(84.0, 112.0, 4.0) {
            return 0.1;
        }
        0.5
    })
}

/// Band-limited random texture in `[0.1, 0.9]`.
pub fn texture(width: usize, height: usize, seed: u64) -> ScalarImage {
    let mut noise = NormalStream::new(seed, u64::MAX);
    let fine = gaussian_smooth(&noise.image(width, height), 1.5, BoundaryRule::Reflect);
    let coarse = gaussian_smooth(&noise.image(width, height), 5.0, BoundaryRule::Reflect);
    let scale = |img: &ScalarImage| {
        let sd = (img.norm_sq() / img.len() as f64 - img.mean().powi(2)).sqrt();
        img.map(|v| v / sd)
    };
    let mut mix = scale(&fine);
    mix.axpy(1.0, &scale(&coarse));
    let (lo, hi) = mix.min_max();
    mix.map(|v| 0.1 + 0.8 * (v - lo) / (hi - lo))
}

/// Test card with texture blended in, so every region carries structure.
pub fn benchmark_scene(width: usize, height: usize) -> ScalarImage {
    let card = test_card(width, height);
    let tex = texture(width, height, 7);
    card.zip_map(&tex, |c, t| 0.75 * c + 0.25 * t)
}
