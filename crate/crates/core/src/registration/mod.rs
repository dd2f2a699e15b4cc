//! Large-deformation diffeomorphic registration.
//!
//! A time-varying velocity field `v_t`, `t in [0, 1]`, generates a flow
//! `phi_t`; the moving image pulled back through the flow is matched to the
//! reference by minimizing
//!
//! ```text
//! E(v) = 1/2 sum_t dt <v_t, v_t>_V + C/2 ||moving o phi_{1,0} - reference||^2
//! ```
//!
//! with `<f, g>_V = <L f, L g>` and `L = -alpha Delta + gamma`. The gradient is
//! the exact derivative of this discrete energy (backpropagation through the
//! semi-Lagrangian transport), mapped into V by `K = (L^T L)^{-1}`.

mod flow;
mod operator;

pub use flow::{compose, integrate_flow, jacobian_determinant, warp_clamped, FlowDirection, TimeVaryingVelocity};
pub use operator::{cn_inner_product, smooth_gradient, CauchyNavier, CauchyNavierParams, ALPHA_RANGE, GAMMA_RANGE};

use operator::sum_sq;

use flow::{backward_adjoint, backward_history, Stencil};

use crate::error::{Error, Result};
use crate::image::{ScalarImage, VectorField};

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub params: CauchyNavierParams,
    /// Weight `C` of the matching term.
    pub data_weight: f64,
    pub time_steps: usize,
    /// First trial step of every descent iteration, halved on failure.
    pub step_size: f64,
    pub max_halvings: usize,
    pub max_iterations: usize,
    /// Stop when the relative energy decrease of an accepted step falls below this.
    pub convergence_tol: f64,
    /// Largest acceptable mean endpoint error of forward∘inverse, in pixels.
    pub diffeo_tolerance: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            params: CauchyNavierParams::default(),
            data_weight: 1e4,
            time_steps: 10,
            step_size: 1.0 / 64.0,
            max_halvings: 20,
            max_iterations: 200,
            convergence_tol: 1e-6,
            diffeo_tolerance: 0.1,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.data_weight > 0.0) {
            return bad("data_weight must be positive");
        }
        if self.time_steps == 0 {
            return bad("time_steps must be at least 1");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if !(self.diffeo_tolerance > 0.0) {
            return bad("diffeo_tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub velocity: TimeVaryingVelocity,
    /// Displacement of `phi_{0,1}`.
    pub forward_map: VectorField,
    /// Displacement of `phi_{1,0}`; `warped(x) = moving(x + inverse_map(x))`.
    pub inverse_map: VectorField,
    pub warped: ScalarImage,
    /// Energy at `v = 0`, then after every accepted step.
    pub energy_trace: Vec<f64>,
    /// Descent iterations started, including the one that detected convergence.
    pub iterations: usize,
    /// True when a stopping rule fired before `max_iterations`.
    pub converged: bool,
    /// Mean endpoint error of `forward ∘ inverse`, in pixels.
    pub inverse_consistency: f64,
    pub warnings: Vec<String>,
}

impl RegistrationResult {
    pub fn final_energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace starts with the initial energy")
    }
}

struct Evaluation {
    energy: f64,
    history: Vec<VectorField>,
    warped: ScalarImage,
}

fn check_inputs(vel: Option<&TimeVaryingVelocity>, moving: &ScalarImage, reference: &ScalarImage) -> Result<()> {
    moving.ensure_same_shape(reference)?;
    if let Some(vel) = vel {
        let (w, h) = vel.shape();
        vel.steps()[0].ensure_shape(moving.width(), moving.height())?;
        debug_assert_eq!((w, h), moving.shape());
    }
    Ok(())
}

fn regularization(op: &CauchyNavier, vel: &TimeVaryingVelocity) -> f64 {
    0.5 * vel.dt() * vel.steps().iter().map(|v| op.norm_sq(v)).sum::<f64>()
}

/// Energy given the regularization term already computed.
fn evaluate_with(reg: f64, vel: &TimeVaryingVelocity, moving: &ScalarImage, reference: &ScalarImage, c: f64) -> Result<Evaluation> {
    let history = backward_history(vel);
    let warped = warp_clamped(moving, history.last().expect("nonempty"))?;
    let mismatch: f64 = warped.data().iter().zip(reference.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Evaluation {
        energy: reg + 0.5 * c * mismatch,
        history,
        warped,
    })
}

fn evaluate(op: &CauchyNavier, vel: &TimeVaryingVelocity, moving: &ScalarImage, reference: &ScalarImage, c: f64) -> Result<Evaluation> {
    evaluate_with(regularization(op, vel), vel, moving, reference, c)
}

fn v_gradient(
    op: &CauchyNavier,
    vel: &TimeVaryingVelocity,
    moving: &ScalarImage,
    reference: &ScalarImage,
    c: f64,
    eval: &Evaluation,
) -> TimeVaryingVelocity {
    let (w, h) = moving.shape();
    let d = eval.history.last().expect("nonempty");
    let mut lambda = VectorField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let r = c * (eval.warped.data()[i] - reference.data()[i]);
            if r == 0.0 {
                continue;
            }
            let s = Stencil::new(x as f64 + d.u[i], y as f64 + d.v[i], w, h);
            let (gx, gy) = s.gradient(moving.data(), w);
            lambda.u[i] = r * gx;
            lambda.v[i] = r * gy;
        }
    }
    let raw = backward_adjoint(vel, &eval.history, lambda);
    let inv_dt = 1.0 / vel.dt();
    let steps = raw
        .iter()
        .zip(vel.steps())
        .map(|(g, v)| {
            let mut out = op.smooth(g);
            out.scale(inv_dt);
            out.axpy(1.0, v);
            out
        })
        .collect();
    TimeVaryingVelocity::new(steps).expect("finite gradient")
}

/// Energy of `vel` for the pair.
pub fn registration_energy(vel: &TimeVaryingVelocity, moving: &ScalarImage, reference: &ScalarImage, cfg: &RegistrationConfig) -> Result<f64> {
    check_inputs(Some(vel), moving, reference)?;
    let (w, h) = moving.shape();
    let op = CauchyNavier::new(w, h, &cfg.params);
    Ok(evaluate(&op, vel, moving, reference, cfg.data_weight)?.energy)
}

/// Gradient of [`registration_energy`] with respect to the time-weighted V
/// inner product `sum_t dt <., .>_V`: `G_t = v_t + K(g_t) / dt`, where `g_t`
/// is the plain derivative of the matching term with respect to `v_t`.
pub fn energy_gradient(vel: &TimeVaryingVelocity, moving: &ScalarImage, reference: &ScalarImage, cfg: &RegistrationConfig) -> Result<TimeVaryingVelocity> {
    check_inputs(Some(vel), moving, reference)?;
    let (w, h) = moving.shape();
    let op = CauchyNavier::new(w, h, &cfg.params);
    let eval = evaluate(&op, vel, moving, reference, cfg.data_weight)?;
    Ok(v_gradient(&op, vel, moving, reference, cfg.data_weight, &eval))
}

/// `sum_t dt <f_t, g_t>_V`.
pub fn velocity_inner_product(f: &TimeVaryingVelocity, g: &TimeVaryingVelocity, params: &CauchyNavierParams) -> f64 {
    let (w, h) = f.shape();
    let op = CauchyNavier::new(w, h, params);
    f.dt() * f.steps().iter().zip(g.steps()).map(|(a, b)| op.inner(a, b)).sum::<f64>()
}

/// Steepest descent from `v = 0` with halving backtracking.
pub fn register(moving: &ScalarImage, reference: &ScalarImage, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    check_inputs(None, moving, reference)?;
    let (w, h) = moving.shape();
    let mut warnings = cfg.params.warnings();
    let op = CauchyNavier::new(w, h, &cfg.params);
    let c = cfg.data_weight;
    let mut vel = TimeVaryingVelocity::zeros(cfg.time_steps, w, h);
    let dt = vel.dt();
    // L-weighted DCT coefficients of every velocity step; trial steps are
    // linear combinations, so their regularization needs no transforms.
    let mut spec = vec![vec![0.0; 2 * w * h]; cfg.time_steps];
    let mut eval = evaluate(&op, &vel, moving, reference, c)?;
    let mut trace = vec![eval.energy];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let grad = v_gradient(&op, &vel, moving, reference, c, &eval);
        let grad_spec: Vec<Vec<f64>> = grad.steps().iter().map(|g| op.spectrum(g)).collect();
        let slope = dt * grad_spec.iter().map(|g| sum_sq(g)).sum::<f64>();
        if !(slope > f64::EPSILON * f64::EPSILON * eval.energy.max(f64::MIN_POSITIVE)) || eval.energy == 0.0 {
            converged = true;
            break;
        }
        let mut step = cfg.step_size;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut trial = vel.clone();
            trial.axpy(-step, &grad);
            let trial_spec: Vec<Vec<f64>> = spec
                .iter()
                .zip(&grad_spec)
                .map(|(a, g)| a.iter().zip(g).map(|(a, g)| a - step * g).collect())
                .collect();
            let reg = 0.5 * dt * trial_spec.iter().map(|a| sum_sq(a)).sum::<f64>();
            let te = evaluate_with(reg, &trial, moving, reference, c)?;
            if te.energy < eval.energy {
                accepted = Some((trial, trial_spec, te));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_spec, te)) = accepted else {
            if iterations == 1 {
                return Err(Error::NoDecrease);
            }
            converged = true;
            break;
        };
        let rel = (eval.energy - te.energy) / eval.energy;
        vel = trial;
        spec = trial_spec;
        eval = te;
        trace.push(eval.energy);
        if rel < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    let inverse_map = eval.history.pop().expect("nonempty");
    let forward_map = integrate_flow(&vel, FlowDirection::Forward);
    let inverse_consistency = compose(&forward_map, &inverse_map)?.mean_magnitude();
    if inverse_consistency > cfg.diffeo_tolerance {
        let m = format!(
            "forward/inverse maps disagree by {inverse_consistency:.3} px (tolerance {})",
            cfg.diffeo_tolerance
        );
        log::warn!("{m}");
        warnings.push(m);
    }
    Ok(RegistrationResult {
        velocity: vel,
        forward_map,
        inverse_map,
        warped: eval.warped,
        energy_trace: trace,
        iterations,
        converged,
        inverse_consistency,
        warnings,
    })
}
