//! Total-variation blind deconvolution by alternating minimization.
//!
//! The energy is
//!
//! ```text
//! E(I, H) = 1/2 ||H * I - f||^2 + alpha1 sum |grad I|_eps + alpha2 sum |grad H|_eps
//! ```
//!
//! with `|g|_eps = sqrt(|g|^2 + eps^2)`. Each half-step freezes the TV
//! diffusivity at the current iterate (lagged diffusivity) and solves the
//! resulting symmetric positive definite system with conjugate gradients,
//! preconditioned by an operator that the DCT-II diagonalizes. Reflecting
//! boundaries make symmetric blurs Toeplitz-plus-Hankel, which is exactly
//! the class the DCT-II diagonalizes.

mod kernel;
mod solver;

pub use kernel::BlurKernel;
pub use solver::{pcg, solve_quadratic_dct, DctPreconditioner, SolveReport};

use crate::convolve::{check_kernel_fits, convolve_adjoint_unchecked, convolve_unchecked, KernelOperator};
use crate::diffops::{total_variation_smoothed, tv_diffusivity, weighted_neg_div_grad};
use crate::error::{Error, Result};
use crate::image::{BoundaryRule, ScalarImage};
use crate::transform::{neumann_laplacian_symbol, Dct2Plan};

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvConfig {
    /// TV weight on the image.
    pub alpha1: f64,
    /// TV weight on the kernel.
    pub alpha2: f64,
    pub epsilon_tv: f64,
    /// Odd side length of the square kernel support.
    pub kernel_size: usize,
    pub outer_iterations: usize,
    /// Diffusivity refreshes per half-step.
    pub fixed_point_iterations: usize,
    /// Relative residual at which CG stops.
    pub solver_tolerance: f64,
    pub max_solver_iterations: usize,
    /// Stop when the relative energy decrease of an outer iteration falls below this.
    pub min_relative_decrease: f64,
    pub rule: BoundaryRule,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        Self {
            alpha1: 1e-5,
            alpha2: 1e-3,
            epsilon_tv: 1e-3,
            kernel_size: 15,
            outer_iterations: 10,
            fixed_point_iterations: 1,
            solver_tolerance: 1e-6,
            max_solver_iterations: 100,
            min_relative_decrease: 1e-6,
            rule: BoundaryRule::Reflect,
        }
    }
}

impl DeconvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.alpha1 > 0.0) {
            return bad("alpha1 must be positive");
        }
        if !(self.alpha2 > 0.0) {
            return bad("alpha2 must be positive");
        }
        if !(self.epsilon_tv > 0.0) {
            return bad("epsilon_tv must be positive");
        }
        if self.kernel_size < 3 || self.kernel_size % 2 == 0 {
            return bad("kernel_size must be odd and at least 3");
        }
        if self.fixed_point_iterations == 0 {
            return bad("fixed_point_iterations must be at least 1");
        }
        if !(self.solver_tolerance > 0.0) {
            return bad("solver_tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DeconvResult {
    pub image: ScalarImage,
    pub kernel: BlurKernel,
    /// Energy at the initial point, then after every outer iteration.
    pub energy_trace: Vec<f64>,
    /// Energy after every half-step (kernel, image, kernel, ...), starting
    /// with the initial energy.
    pub step_energies: Vec<f64>,
    /// Half-steps whose energy rose by more than 1e-8.
    pub nonmonotone_steps: usize,
    /// Kernel steps where the projected solution raised the energy and a
    /// shorter step toward it was taken instead.
    pub projection_backtracks: usize,
    /// Set when the image was flat and the kernel could not be identified.
    pub degenerate_kernel: bool,
}

/// Discrete energy with epsilon-smoothed TV terms.
pub fn energy(img: &ScalarImage, kernel: &BlurKernel, observed: &ScalarImage, cfg: &DeconvConfig) -> Result<f64> {
    img.ensure_same_shape(observed)?;
    check_kernel_fits(img, kernel.weights())?;
    Ok(energy_unchecked(img, kernel.weights(), observed, cfg))
}

fn energy_unchecked(img: &ScalarImage, kernel: &ScalarImage, observed: &ScalarImage, cfg: &DeconvConfig) -> f64 {
    let blurred = convolve_unchecked(img, kernel, cfg.rule);
    let data: f64 = blurred
        .data()
        .iter()
        .zip(observed.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * data
        + cfg.alpha1 * total_variation_smoothed(img, cfg.epsilon_tv)
        + cfg.alpha2 * total_variation_smoothed(kernel, cfg.epsilon_tv)
}

fn flipped_symmetric(kernel: &ScalarImage) -> ScalarImage {
    let (w, h) = kernel.shape();
    ScalarImage::from_fn(w, h, |x, y| {
        0.25 * (kernel.get(x, y)
            + kernel.get(w - 1 - x, y)
            + kernel.get(x, h - 1 - y)
            + kernel.get(w - 1 - x, h - 1 - y))
    })
}

/// DCT-II eigenvalues of reflected convolution with the symmetrized kernel.
fn blur_symbol(kernel: &ScalarImage, w: usize, h: usize, rule: BoundaryRule, plan: &Dct2Plan) -> ScalarImage {
    let sym = flipped_symmetric(kernel);
    let e = ScalarImage::delta(w, h, 0, 0);
    let column = plan.forward(&convolve_unchecked(&e, &sym, rule));
    let basis = plan.forward(&e);
    column.zip_map(&basis, |a, b| a / b)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Lagged-diffusivity normal equations for the image with the kernel fixed:
/// `(K^T K - alpha1 div(w grad)) I = K^T f`, `w = 1/|grad I_cur|_eps`.
pub struct ImageSystem {
    kernel: ScalarImage,
    diffusivity: ScalarImage,
    alpha1: f64,
    rule: BoundaryRule,
    rhs: ScalarImage,
    preconditioner: DctPreconditioner,
}

impl ImageSystem {
    pub fn new(kernel: &BlurKernel, observed: &ScalarImage, current: &ScalarImage, cfg: &DeconvConfig) -> Result<Self> {
        current.ensure_same_shape(observed)?;
        check_kernel_fits(observed, kernel.weights())?;
        let (w, h) = observed.shape();
        let k = kernel.weights().clone();
        let diffusivity = tv_diffusivity(current, cfg.epsilon_tv);
        let rhs = convolve_adjoint_unchecked(observed, &k, cfg.rule);
        let plan = Dct2Plan::new(w, h);
        let sigma = blur_symbol(&k, w, h, cfg.rule, &plan);
        let lap = neumann_laplacian_symbol(w, h, 1.0);
        let reg = cfg.alpha1 * mean(diffusivity.data());
        let spectrum = sigma.zip_map(&lap, |s, l| (s * s + reg * l).max(1e-12));
        Ok(Self {
            kernel: k,
            diffusivity,
            alpha1: cfg.alpha1,
            rule: cfg.rule,
            rhs,
            preconditioner: DctPreconditioner::from_parts(plan, spectrum),
        })
    }

    pub fn apply(&self, x: &ScalarImage) -> ScalarImage {
        let blurred = convolve_unchecked(x, &self.kernel, self.rule);
        let mut out = convolve_adjoint_unchecked(&blurred, &self.kernel, self.rule);
        out.axpy(self.alpha1, &weighted_neg_div_grad(x, &self.diffusivity));
        out
    }

    pub fn rhs(&self) -> &ScalarImage {
        &self.rhs
    }

    pub fn solve(&self, x0: &ScalarImage, cfg: &DeconvConfig) -> Result<SolveReport> {
        pcg(
            |x| self.apply(x),
            |r| self.preconditioner.apply(r),
            &self.rhs,
            x0,
            cfg.solver_tolerance,
            cfg.max_solver_iterations,
        )
    }
}

/// Lagged-diffusivity normal equations for the kernel with the image fixed:
/// `(A^T A - alpha2 div(w grad)) H = A^T f` where `A H = I * H`.
pub struct KernelSystem {
    op: KernelOperator,
    diffusivity: ScalarImage,
    alpha2: f64,
    rhs: ScalarImage,
    preconditioner: DctPreconditioner,
}

impl KernelSystem {
    pub fn new(img: &ScalarImage, observed: &ScalarImage, current: &ScalarImage, cfg: &DeconvConfig) -> Result<Self> {
        img.ensure_same_shape(observed)?;
        check_kernel_fits(img, current)?;
        let (kw, kh) = current.shape();
        let op = KernelOperator::new(img, kw, kh, cfg.rule);
        let diffusivity = tv_diffusivity(current, cfg.epsilon_tv);
        let rhs = op.apply_adjoint(observed);
        // The Gram matrix of shifted copies of the image is roughly
        // n*var on the diagonal plus a rank-one n*mean^2 block on constants.
        let n = img.len() as f64;
        let m = img.mean();
        let var = (img.norm_sq() / n - m * m).max(1e-12);
        let reg = cfg.alpha2 * mean(diffusivity.data());
        let lap = neumann_laplacian_symbol(kw, kh, 1.0);
        let mut spectrum = lap.map(|l| n * var + reg * l);
        spectrum.data_mut()[0] += n * m * m * (kw * kh) as f64;
        Ok(Self {
            op,
            diffusivity,
            alpha2: cfg.alpha2,
            rhs,
            preconditioner: DctPreconditioner::from_parts(Dct2Plan::new(kw, kh), spectrum),
        })
    }

    pub fn apply(&self, h: &ScalarImage) -> ScalarImage {
        let mut out = self.op.apply_adjoint(&self.op.apply(h));
        out.axpy(self.alpha2, &weighted_neg_div_grad(h, &self.diffusivity));
        out
    }

    pub fn rhs(&self) -> &ScalarImage {
        &self.rhs
    }

    pub fn solve(&self, x0: &ScalarImage, cfg: &DeconvConfig) -> Result<SolveReport> {
        pcg(
            |x| self.apply(x),
            |r| self.preconditioner.apply(r),
            &self.rhs,
            x0,
            cfg.solver_tolerance,
            cfg.max_solver_iterations,
        )
    }
}

/// Image update with the kernel held fixed.
pub fn image_step(kernel: &BlurKernel, observed: &ScalarImage, current: &ScalarImage, cfg: &DeconvConfig) -> Result<ScalarImage> {
    let mut x = current.clone();
    for _ in 0..cfg.fixed_point_iterations {
        let system = ImageSystem::new(kernel, observed, &x, cfg)?;
        x = system.solve(&x, cfg)?.solution;
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct KernelStep {
    pub kernel: BlurKernel,
    /// The image is flat, so the data term does not depend on the kernel
    /// shape; `kernel` is the input kernel unchanged.
    pub degenerate: bool,
    /// The projected solution raised the energy; a shorter feasible step
    /// toward it (possibly of length zero) was taken.
    pub backtracked: bool,
}

const PROJECTION_HALVINGS: usize = 20;

/// Kernel update with the image held fixed, followed by projection onto
/// nonnegative unit-sum kernels.
pub fn kernel_step(img: &ScalarImage, observed: &ScalarImage, current: &BlurKernel, cfg: &DeconvConfig) -> Result<KernelStep> {
    img.ensure_same_shape(observed)?;
    check_kernel_fits(img, current.weights())?;
    let (lo, hi) = img.min_max();
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Ok(KernelStep {
            kernel: current.clone(),
            degenerate: true,
            backtracked: false,
        });
    }
    let mut h = current.weights().clone();
    for _ in 0..cfg.fixed_point_iterations {
        let system = KernelSystem::new(img, observed, &h, cfg)?;
        h = system.solve(&h, cfg)?.solution;
    }
    let projected = BlurKernel::project(&h)?;
    let e_current = energy_unchecked(img, current.weights(), observed, cfg);
    if energy_unchecked(img, projected.weights(), observed, cfg) <= e_current {
        return Ok(KernelStep {
            kernel: projected,
            degenerate: false,
            backtracked: false,
        });
    }
    // Convex combinations of feasible kernels stay feasible and E is convex in H.
    let mut t = 0.5;
    for _ in 0..PROJECTION_HALVINGS {
        let mut mix = current.weights().clone();
        mix.scale(1.0 - t);
        mix.axpy(t, projected.weights());
        let candidate = BlurKernel::project(&mix)?;
        if energy_unchecked(img, candidate.weights(), observed, cfg) <= e_current {
            return Ok(KernelStep {
                kernel: candidate,
                degenerate: false,
                backtracked: true,
            });
        }
        t *= 0.5;
    }
    Ok(KernelStep {
        kernel: current.clone(),
        degenerate: false,
        backtracked: true,
    })
}

const MONOTONE_SLACK: f64 = 1e-8;

/// Alternates kernel and image updates starting from `I = observed`,
/// `H = delta`.
pub fn blind_deconvolve(observed: &ScalarImage, cfg: &DeconvConfig) -> Result<DeconvResult> {
    cfg.validate()?;
    let kernel = BlurKernel::delta(cfg.kernel_size);
    check_kernel_fits(observed, kernel.weights())?;
    blind_deconvolve_from(observed, observed.clone(), kernel, cfg)
}

/// [`blind_deconvolve`] from an explicit starting pair.
pub fn blind_deconvolve_from(
    observed: &ScalarImage,
    mut image: ScalarImage,
    mut kernel: BlurKernel,
    cfg: &DeconvConfig,
) -> Result<DeconvResult> {
    cfg.validate()?;
    let mut e = energy(&image, &kernel, observed, cfg)?;
    let mut energy_trace = vec![e];
    let mut step_energies = vec![e];
    let mut nonmonotone_steps = 0;
    let mut projection_backtracks = 0;
    let mut degenerate_kernel = false;
    for outer in 0..cfg.outer_iterations {
        let e_start = e;

        let step = kernel_step(&image, observed, &kernel, cfg)?;
        degenerate_kernel |= step.degenerate;
        projection_backtracks += step.backtracked as usize;
        kernel = step.kernel;
        let e_kernel = energy_unchecked(&image, kernel.weights(), observed, cfg);
        if e_kernel > e + MONOTONE_SLACK {
            nonmonotone_steps += 1;
            log::warn!("kernel step {outer} raised energy {e:.6e} -> {e_kernel:.6e}");
        }
        step_energies.push(e_kernel);

        image = image_step(&kernel, observed, &image, cfg)?;
        e = energy_unchecked(&image, kernel.weights(), observed, cfg);
        if e > e_kernel + MONOTONE_SLACK {
            nonmonotone_steps += 1;
            log::warn!("image step {outer} raised energy {e_kernel:.6e} -> {e:.6e}");
        }
        step_energies.push(e);
        energy_trace.push(e);

        if !e.is_finite() {
            return Err(Error::SolverDiverged(format!("non-finite energy at outer iteration {outer}")));
        }
        if (e_start - e) <= cfg.min_relative_decrease * e_start.abs() {
            break;
        }
    }
    Ok(DeconvResult {
        image,
        kernel,
        energy_trace,
        step_energies,
        nonmonotone_steps,
        projection_backtracks,
        degenerate_kernel,
    })
}
