mod common;

use common::lcg_image;
use proptest::prelude::*;
use turbrest::convolve::convolve;
use turbrest::deconv::BlurKernel;
use turbrest::diffops::{divergence, gradient};
use turbrest::io::{load_image, save_image};
use turbrest::metrics::{kernel_correlation, mean_endpoint_error, psnr};
use turbrest::sampling::warp;
use turbrest::simulate::{gaussian_kernel, simulate, test_card, texture, SimConfig};
use turbrest::temporal::{temporal_mean, temporal_median, Sequence};
use turbrest::{BoundaryRule, Error, ScalarImage, VectorField};

#[test]
fn pgm_examples() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.pgm");
    let mut bytes = b"P5\n2 2\n255\n".to_vec();
    bytes.extend_from_slice(&[0, 255, 128, 64]);
    std::fs::write(&p, bytes).unwrap();
    let img = load_image(&p).unwrap();
    assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);

    let p16 = dir.path().join("b.pgm");
    let mut bytes = b"P5 1 1 65535\n".to_vec();
    bytes.extend_from_slice(&[0xff, 0xff]);
    std::fs::write(&p16, bytes).unwrap();
    assert_eq!(load_image(&p16).unwrap().data(), &[1.0]);

    let ascii = dir.path().join("c.pgm");
    std::fs::write(&ascii, "P2\n# comment\n3 1\n10\n0 5 10\n").unwrap();
    assert_eq!(load_image(&ascii).unwrap().data(), &[0.0, 0.5, 1.0]);
}

#[test]
fn color_png_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rgb.png");
    image::RgbImage::from_pixel(3, 2, image::Rgb([10, 20, 30])).save(&p).unwrap();
    assert!(matches!(load_image(&p), Err(Error::UnsupportedFormat(_))));
    assert!(matches!(load_image(dir.path().join("missing.png")), Err(Error::FileNotFound(_))));
}

#[test]
fn save_clamps_and_quantizes() {
    let dir = tempfile::tempdir().unwrap();
    let img = ScalarImage::new(4, 1, vec![1.7, -0.2, 0.5, 0.25]).unwrap();
    for ext in ["png", "pgm"] {
        let p = dir.path().join(format!("x.{ext}"));
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.get(0, 0), 1.0);
        assert_eq!(back.get(1, 0), 0.0);
        assert!((back.get(2, 0) - 0.5).abs() <= 1.0 / 255.0);
        assert!((back.get(3, 0) - 0.25).abs() <= 1.0 / 255.0);
    }
}

#[test]
fn warp_there_and_back_preserves_smooth_blob() {
    let n = 64;
    let blob = ScalarImage::from_fn(n, n, |x, y| {
        let (dx, dy) = (x as f64 - 31.5, y as f64 - 31.5);
        0.1 + 0.8 * (-(dx * dx + dy * dy) / (2.0 * 6.0 * 6.0)).exp()
    });
    for (a, b) in [(2.0, 0.0), (0.0, -2.0), (1.3, 1.4), (-0.7, 0.4)] {
        let there = warp(&blob, &VectorField::constant(n, n, a, b), BoundaryRule::Reflect).unwrap();
        let back = warp(&there, &VectorField::constant(n, n, -a, -b), BoundaryRule::Reflect).unwrap();
        let p = psnr(&back, &blob).unwrap();
        assert!(p >= 40.0, "d=({a},{b}): {p}");
    }
}

#[test]
fn warp_shifts_ramp_exactly() {
    let ramp = ScalarImage::from_fn(10, 6, |x, _| x as f64 / 10.0);
    let out = warp(&ramp, &VectorField::constant(10, 6, 1.0, 0.0), BoundaryRule::Clamp).unwrap();
    for y in 0..6 {
        for x in 0..9 {
            assert!((out.get(x, y) - ramp.get(x + 1, y)).abs() < 1e-15);
        }
    }
}

fn conv_oracle(img: &ScalarImage, k: &ScalarImage) -> ScalarImage {
    let (w, h) = img.shape();
    let (kw, kh) = k.shape();
    let refl = |i: isize, n: usize| {
        let n = n as isize;
        let m = i.rem_euclid(2 * n);
        (if m >= n { 2 * n - 1 - m } else { m }) as usize
    };
    ScalarImage::from_fn(w, h, |x, y| {
        let mut s = 0.0;
        for b in 0..kh {
            for a in 0..kw {
                let sx = refl(x as isize + (kw / 2) as isize - a as isize, w);
                let sy = refl(y as isize + (kh / 2) as isize - b as isize, h);
                s += k.get(a, b) * img.get(sx, sy);
            }
        }
        s
    })
}

#[test]
fn convolution_matches_nested_loops() {
    let img = lcg_image(16, 16, 3);
    let k = lcg_image(5, 5, 4);
    let out = convolve(&img, &k, BoundaryRule::Reflect).unwrap();
    assert!(out.max_abs_diff(&conv_oracle(&img, &k)) < 1e-12);
}

#[test]
fn gaussian_kernel_center_weight() {
    let k = gaussian_kernel(1.0, 7).unwrap();
    let total: f64 = (-3..=3)
        .flat_map(|y| (-3..=3).map(move |x| (-((x * x + y * y) as f64) / 2.0).exp()))
        .sum();
    assert!((k.weights().get(3, 3) - 1.0 / total).abs() < 1e-14);
    assert_eq!(gaussian_kernel(0.0, 5).unwrap(), BlurKernel::delta(5));
}

#[test]
fn simulator_identity_and_blur_only() {
    let clean = test_card(32, 24);
    let none = SimConfig { frames: 3, blur_sigma: 0.0, warp_amplitude: 0.0, noise_sigma: 0.0, ..SimConfig::default() };
    let gt = simulate(&clean, &none).unwrap();
    assert!(gt.degraded.frames().iter().all(|f| *f == clean));

    let blur = SimConfig { frames: 1, blur_sigma: 1.5, warp_amplitude: 0.0, noise_sigma: 0.0, ..SimConfig::default() };
    let gt = simulate(&clean, &blur).unwrap();
    let expected = convolve(&clean, gaussian_kernel(1.5, 11).unwrap().weights(), BoundaryRule::Reflect).unwrap();
    assert_eq!(gt.degraded.frames()[0], expected);
}

#[test]
fn simulator_warp_statistics() {
    let clean = texture(128, 128, 1);
    let cfg = SimConfig { frames: 6, ..SimConfig::default() };
    let gt = simulate(&clean, &cfg).unwrap();
    for w in &gt.warps {
        assert!((w.max_magnitude() - cfg.warp_amplitude).abs() < 1e-6);
        let mu = w.u.iter().sum::<f64>() / w.len() as f64;
        let mv = w.v.iter().sum::<f64>() / w.len() as f64;
        assert!(mu.hypot(mv) < 0.1);
    }
    assert_ne!(gt.warps[0], gt.warps[1]);
    let again = simulate(&clean, &cfg).unwrap();
    assert_eq!(gt.degraded.frames(), again.degraded.frames());
}

#[test]
fn median_ignores_single_outlier_mean_does_not() {
    let clean = test_card(20, 20);
    let mut frames = vec![clean.clone(); 5];
    frames[2] = lcg_image(20, 20, 9);
    let seq = Sequence::new(frames).unwrap();
    assert_eq!(temporal_median(&seq), clean);
    assert!(temporal_mean(&seq).max_abs_diff(&clean) > 0.01);
}

#[test]
fn mean_matches_summation_oracle() {
    let frames: Vec<_> = (0..4).map(|i| lcg_image(7, 5, i)).collect();
    let mean = temporal_mean(&Sequence::new(frames.clone()).unwrap());
    for y in 0..5 {
        for x in 0..7 {
            let s: f64 = frames.iter().map(|f| f.get(x, y)).sum::<f64>() / 4.0;
            assert!((mean.get(x, y) - s).abs() < 1e-12);
        }
    }
}

#[test]
fn psnr_matches_direct_sum() {
    let a = lcg_image(13, 7, 1);
    let b = lcg_image(13, 7, 2);
    let mse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 91.0;
    assert!((psnr(&a, &b).unwrap() + 10.0 * mse.log10()).abs() < 1e-10);
}

#[test]
fn endpoint_error_matches_direct_sum() {
    let a = VectorField::from_channels(lcg_image(9, 6, 1), lcg_image(9, 6, 2)).unwrap();
    let b = VectorField::from_channels(lcg_image(9, 6, 3), lcg_image(9, 6, 4)).unwrap();
    let direct: f64 = (0..54).map(|i| (a.u[i] - b.u[i]).hypot(a.v[i] - b.v[i])).sum::<f64>() / 54.0;
    assert!((mean_endpoint_error(&a, &b).unwrap() - direct).abs() < 1e-14);
    let shifted = VectorField::from_fn(9, 6, |x, y| (b.get(x, y).0 + 1.0, b.get(x, y).1));
    assert!((mean_endpoint_error(&shifted, &b).unwrap() - 1.0).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_divergence_adjoint(seed in 0u64..10_000) {
        let a = lcg_image(8, 8, seed);
        let b = VectorField::from_channels(lcg_image(8, 8, seed + 1), lcg_image(8, 8, seed + 2)).unwrap();
        let lhs = gradient(&a).dot(&b);
        let rhs = a.dot(&divergence(&b));
        prop_assert!((lhs + rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn convolution_is_linear(seed in 0u64..10_000, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let x = lcg_image(9, 7, seed);
        let y = lcg_image(9, 7, seed + 1);
        let k = lcg_image(3, 5, seed + 2);
        let lhs = convolve(&x.zip_map(&y, |p, q| s * p + t * q), &k, BoundaryRule::Reflect).unwrap();
        let cx = convolve(&x, &k, BoundaryRule::Reflect).unwrap();
        let cy = convolve(&y, &k, BoundaryRule::Reflect).unwrap();
        prop_assert!(lhs.max_abs_diff(&cx.zip_map(&cy, |p, q| s * p + t * q)) < 1e-12);
    }

    #[test]
    fn zero_warp_is_identity(seed in 0u64..10_000) {
        let img = lcg_image(11, 6, seed);
        for rule in [BoundaryRule::Reflect, BoundaryRule::Clamp] {
            prop_assert_eq!(&warp(&img, &VectorField::zeros(11, 6), rule).unwrap(), &img);
        }
    }

    #[test]
    fn psnr_is_symmetric(seed in 0u64..10_000) {
        let a = lcg_image(6, 6, seed);
        let b = lcg_image(6, 6, seed + 1);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn endpoint_error_translation_equivariant(seed in 0u64..10_000, cu in -3.0f64..3.0, cv in -3.0f64..3.0) {
        let a = VectorField::from_channels(lcg_image(5, 5, seed), lcg_image(5, 5, seed + 1)).unwrap();
        let b = VectorField::from_channels(lcg_image(5, 5, seed + 2), lcg_image(5, 5, seed + 3)).unwrap();
        let shift = VectorField::constant(5, 5, cu, cv);
        let (mut a2, mut b2) = (a.clone(), b.clone());
        a2.axpy(1.0, &shift);
        b2.axpy(1.0, &shift);
        let e1 = mean_endpoint_error(&a, &b).unwrap();
        let e2 = mean_endpoint_error(&a2, &b2).unwrap();
        prop_assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn kernel_correlation_is_bounded(seed in 0u64..10_000) {
        let a = BlurKernel::project(&lcg_image(5, 5, seed).map(|v| v + 0.5)).unwrap();
        let b = BlurKernel::project(&lcg_image(7, 7, seed + 1).map(|v| v + 0.5)).unwrap();
        let c = kernel_correlation(&a, &b);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&c));
        prop_assert!((kernel_correlation(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn temporal_filters_stay_in_range(seed in 0u64..10_000, n in 1usize..8) {
        let frames: Vec<_> = (0..n as u64).map(|i| lcg_image(4, 3, seed * 10 + i)).collect();
        let seq = Sequence::new(frames.clone()).unwrap();
        for out in [temporal_mean(&seq), temporal_median(&seq)] {
            for i in 0..12 {
                let lo = frames.iter().map(|f| f.data()[i]).fold(f64::INFINITY, f64::min);
                let hi = frames.iter().map(|f| f.data()[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.data()[i] >= lo - 1e-15 && out.data()[i] <= hi + 1e-15);
            }
        }
    }
}
