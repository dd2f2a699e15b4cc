mod common;

use common::lcg_image;
use proptest::prelude::*;
use turbrest::metrics::mean_endpoint_error;
use turbrest::registration::{
    cn_inner_product, energy_gradient, integrate_flow, jacobian_determinant, register, registration_energy,
    velocity_inner_product, warp_clamped, CauchyNavierParams, FlowDirection, RegistrationConfig, RegistrationResult,
    TimeVaryingVelocity,
};
use turbrest::simulate::{gaussian_smooth, simulate, texture, SimConfig};
use turbrest::{BoundaryRule, ScalarImage, VectorField};

fn smooth_field(w: usize, h: usize, seed: u64, scale: f64) -> VectorField {
    let u = gaussian_smooth(&lcg_image(w, h, seed), 2.0, BoundaryRule::Reflect).map(|a| a * scale);
    let v = gaussian_smooth(&lcg_image(w, h, seed + 1000), 2.0, BoundaryRule::Reflect).map(|a| a * scale);
    VectorField::from_channels(u, v).unwrap()
}

fn smooth_velocity(t: usize, w: usize, h: usize, seed: u64, scale: f64) -> TimeVaryingVelocity {
    TimeVaryingVelocity::new((0..t).map(|i| smooth_field(w, h, seed * 31 + i as u64, scale)).collect()).unwrap()
}

/// `gamma u - alpha Laplacian(u)` with the 5-point Neumann stencil at spacing `h`.
fn apply_l(u: &ScalarImage, p: &CauchyNavierParams) -> ScalarImage {
    let (w, hh) = u.shape();
    let inv = 1.0 / (p.grid_spacing * p.grid_spacing);
    ScalarImage::from_fn(w, hh, |x, y| {
        let c = u.get(x, y);
        let mut lap = 0.0;
        if x > 0 {
            lap += c - u.get(x - 1, y);
        }
        if x + 1 < w {
            lap += c - u.get(x + 1, y);
        }
        if y > 0 {
            lap += c - u.get(x, y - 1);
        }
        if y + 1 < hh {
            lap += c - u.get(x, y + 1);
        }
        p.gamma * c + p.alpha * inv * lap
    })
}

fn v_norm_sq_oracle(f: &VectorField, p: &CauchyNavierParams) -> f64 {
    apply_l(&f.u_image(), p).norm_sq() + apply_l(&f.v_image(), p).norm_sq()
}

fn pair(n: usize) -> (ScalarImage, ScalarImage) {
    let a = gaussian_smooth(&texture(n, n, 3), 1.0, BoundaryRule::Reflect);
    let b = warp_clamped(&a, &smooth_field(n, n, 9, 20.0)).unwrap();
    (b, a)
}

#[test]
fn energy_matches_summation_oracle() {
    let (moving, reference) = pair(24);
    let cfg = RegistrationConfig { time_steps: 5, data_weight: 300.0, ..RegistrationConfig::default() };
    let vel = smooth_velocity(5, 24, 24, 4, 30.0);
    let e = registration_energy(&vel, &moving, &reference, &cfg).unwrap();
    let reg: f64 = vel.steps().iter().map(|v| v_norm_sq_oracle(v, &cfg.params)).sum::<f64>() * 0.5 / 5.0;
    let warped = warp_clamped(&moving, &integrate_flow(&vel, FlowDirection::Backward)).unwrap();
    let data: f64 = warped.data().iter().zip(reference.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let oracle = reg + 0.5 * cfg.data_weight * data;
    assert!((e - oracle).abs() < 1e-10 * oracle, "{e} vs {oracle}");
}

#[test]
fn energy_at_zero_velocity_is_data_term() {
    let (moving, reference) = pair(16);
    let cfg = RegistrationConfig::default();
    let z = TimeVaryingVelocity::zeros(10, 16, 16);
    let e = registration_energy(&z, &moving, &reference, &cfg).unwrap();
    let d: f64 = moving.data().iter().zip(reference.data()).map(|(a, b)| (a - b).powi(2)).sum();
    assert!((e - 0.5 * cfg.data_weight * d).abs() < 1e-12 * e);
    assert_eq!(registration_energy(&z, &reference, &reference, &cfg).unwrap(), 0.0);
    let g = energy_gradient(&z, &reference, &reference, &cfg).unwrap();
    assert!(g.is_zero());
}

#[test]
fn gradient_matches_central_differences() {
    let (moving, reference) = pair(32);
    let cfg = RegistrationConfig { time_steps: 4, data_weight: 1e3, ..RegistrationConfig::default() };
    let vel = smooth_velocity(4, 32, 32, 1, 20.0);
    let g = energy_gradient(&vel, &moving, &reference, &cfg).unwrap();
    for k in 0..5 {
        let dir = smooth_velocity(4, 32, 32, 100 + k, 20.0);
        let eps = 1e-4;
        let mut plus = vel.clone();
        plus.axpy(eps, &dir);
        let mut minus = vel.clone();
        minus.axpy(-eps, &dir);
        let fd = (registration_energy(&plus, &moving, &reference, &cfg).unwrap()
            - registration_energy(&minus, &moving, &reference, &cfg).unwrap())
            / (2.0 * eps);
        let an = velocity_inner_product(&g, &dir, &cfg.params);
        assert!((fd - an).abs() < 1e-3 * fd.abs().max(an.abs()), "{fd} vs {an}");
    }
}

#[test]
fn pure_regularization_gradient_is_velocity() {
    let (moving, reference) = pair(16);
    let cfg = RegistrationConfig { data_weight: f64::MIN_POSITIVE, time_steps: 3, ..RegistrationConfig::default() };
    let vel = smooth_velocity(3, 16, 16, 2, 5.0);
    let g = energy_gradient(&vel, &moving, &reference, &cfg).unwrap();
    for (a, b) in g.steps().iter().zip(vel.steps()) {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        assert!(d.max_magnitude() < 1e-10 * b.max_magnitude());
    }
}

fn assert_diffeomorphic(r: &RegistrationResult) {
    assert!(r.inverse_consistency < 0.1, "{}", r.inverse_consistency);
    let j = jacobian_determinant(&r.forward_map);
    let (w, h) = j.shape();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            assert!(j.get(x, y) > 0.0);
        }
    }
    assert!(r.energy_trace.windows(2).all(|p| p[1] <= p[0]));
}

#[test]
fn identical_images_give_identity() {
    let img = texture(32, 24, 2);
    let r = register(&img, &img, &RegistrationConfig::default()).unwrap();
    assert_eq!(r.iterations, 1);
    assert!(r.velocity.is_zero());
    assert!(r.forward_map.is_zero() && r.inverse_map.is_zero());
    assert_eq!(r.warped, img);
}

#[test]
fn sinusoidal_warp_is_recovered() {
    let n = 64;
    let clean = gaussian_smooth(&texture(n, n, 11), 0.7, BoundaryRule::Reflect);
    let two_pi = 2.0 * std::f64::consts::PI;
    let truth = VectorField::from_fn(n, n, |x, y| {
        (2.0 * (two_pi * y as f64 / 32.0).sin(), 2.0 * (two_pi * x as f64 / 40.0).cos())
    });
    let moving = warp_clamped(&clean, &truth).unwrap();
    let r = register(&moving, &clean, &RegistrationConfig::default()).unwrap();
    let inner = |f: &VectorField| {
        let (u, v) = (f.u_image().crop(4, 4, n - 8, n - 8), f.v_image().crop(4, 4, n - 8, n - 8));
        VectorField::from_channels(u, v).unwrap()
    };
    let epe = mean_endpoint_error(&inner(&r.forward_map), &inner(&truth)).unwrap();
    assert!(epe < 0.5, "{epe}");
    assert!(r.energy_trace.windows(2).all(|p| p[1] <= p[0]));
    assert!(r.inverse_consistency < 0.1);
}

#[test]
fn parameters_outside_box_warn_but_run() {
    let (moving, reference) = pair(16);
    let cfg = RegistrationConfig {
        params: CauchyNavierParams { alpha: 0.5, ..CauchyNavierParams::default() },
        max_iterations: 3,
        ..RegistrationConfig::default()
    };
    let r = register(&moving, &reference, &cfg).unwrap();
    assert!(!r.warnings.is_empty());
    assert!(r.final_energy() < r.energy_trace[0]);
}

#[test]
fn larger_gamma_never_increases_displacement() {
    let clean = gaussian_smooth(&texture(32, 32, 5), 1.0, BoundaryRule::Reflect);
    let sc = SimConfig {
        frames: 1,
        blur_sigma: 0.0,
        warp_amplitude: 1.5,
        warp_correlation_length: 6.0,
        noise_sigma: 0.0,
        ..SimConfig::default()
    };
    let gt = simulate(&clean, &sc).unwrap();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for gamma in [0.1, 0.4, 0.7, 1.0] {
        let cfg = RegistrationConfig {
            params: CauchyNavierParams { gamma, ..CauchyNavierParams::default() },
            max_iterations: 3000,
            convergence_tol: 1e-9,
            ..RegistrationConfig::default()
        };
        let r = register(&gt.degraded.frames()[0], &clean, &cfg).unwrap();
        assert!(r.converged);
        assert_diffeomorphic(&r);
        let m = (r.forward_map.mean_magnitude(), r.forward_map.max_magnitude());
        assert!(m.0 <= last.0 && m.1 <= last.1, "gamma {gamma}: {m:?} after {last:?}");
        last = m;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn v_inner_product_matches_stencil(seed in 0u64..1000, alpha in 0.0f64..0.3, gamma in 0.1f64..1.0) {
        let p = CauchyNavierParams { alpha, gamma, ..CauchyNavierParams::default() };
        let f = smooth_field(12, 9, seed, 1.0);
        let g = smooth_field(12, 9, seed + 7, 1.0);
        let ip = cn_inner_product(&f, &g, &p).unwrap();
        let oracle = apply_l(&f.u_image(), &p).dot(&apply_l(&g.u_image(), &p))
            + apply_l(&f.v_image(), &p).dot(&apply_l(&g.v_image(), &p));
        prop_assert!((ip - oracle).abs() <= 1e-8 * oracle.abs().max(1e-12));
        prop_assert!(cn_inner_product(&f, &f, &p).unwrap() >= 0.0);
    }

    #[test]
    fn constant_velocity_translates(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 1usize..6) {
        let vel = TimeVaryingVelocity::stationary(VectorField::constant(20, 20, a, b), t);
        let fwd = integrate_flow(&vel, FlowDirection::Forward);
        // Sample away from the clamped border.
        let (u, v) = fwd.get(10, 10);
        prop_assert!((u - a).abs() < 1e-10 && (v - b).abs() < 1e-10);
        let bwd = integrate_flow(&vel, FlowDirection::Backward);
        let (u, v) = bwd.get(10, 10);
        prop_assert!((u + a).abs() < 1e-10 && (v + b).abs() < 1e-10);
    }

    #[test]
    fn small_flows_are_invertible(seed in 0u64..500) {
        let vel = smooth_velocity(6, 24, 24, seed, 15.0);
        let fwd = integrate_flow(&vel, FlowDirection::Forward);
        let bwd = integrate_flow(&vel, FlowDirection::Backward);
        let c = turbrest::registration::compose(&fwd, &bwd).unwrap();
        prop_assert!(c.mean_magnitude() < 0.1);
        let j = jacobian_determinant(&fwd);
        prop_assert!(j.data().iter().all(|&d| d > 0.0));
    }
}
