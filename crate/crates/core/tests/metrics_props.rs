//! Metric maxima, hand-evaluated cases and monotonicity.

use llie_core::imaging::GrayImage;
use llie_core::metrics::{fsim, mse, psnr, ssim, PSNR_CAP_DB};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn scene(seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy, r) = (rng.random_range(8.0..24.0), rng.random_range(8.0..24.0), rng.random_range(4.0..10.0));
    GrayImage::from_fn(32, 32, |x, y| {
        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        let disc = if d < r { 0.7 } else { 0.15 };
        disc + 0.1 * (x as f64 / 31.0)
    })
}

fn noisy(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    let mut out = img.clone();
    for p in out.pixels_mut() {
        *p = (*p + n.sample(&mut rng)).clamp(0.0, 1.0);
    }
    out
}

#[test]
fn self_comparison_hits_the_maximum() {
    for seed in 0..5 {
        let x = scene(seed);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        assert_eq!(fsim(&x, &x).unwrap(), 1.0);
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
    }
}

#[test]
fn psnr_matches_hand_formula() {
    // k of 256 pixels differ by v, so MSE = k·v²/256
    for (k, v) in [(1usize, 1.0), (16, 0.5), (64, 0.2), (256, 0.1), (100, 0.03)] {
        let a = GrayImage::from_fn(16, 16, |_, _| 0.0);
        let b = GrayImage::from_fn(16, 16, |x, y| if y * 16 + x < k { v } else { 0.0 });
        let m = k as f64 * v * v / 256.0;
        assert!((mse(&a, &b).unwrap() - m).abs() <= 1e-15);
        let expect = 10.0 * (1.0 / m).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() <= 1e-9, "k={k} v={v}");
    }
    let black = GrayImage::from_fn(8, 8, |_, _| 0.0);
    let white = GrayImage::from_fn(8, 8, |_, _| 1.0);
    assert_eq!(psnr(&black, &white).unwrap(), 0.0);
    let tenth = GrayImage::from_fn(8, 8, |_, _| 0.1);
    assert!((psnr(&black, &tenth).unwrap() - 20.0).abs() <= 1e-9);
}

#[test]
fn ssim_constant_images_follow_closed_form() {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    for c in [0.2, 0.5, 0.8] {
        let a = GrayImage::from_fn(16, 16, |_, _| c);
        let b = GrayImage::from_fn(16, 16, |_, _| 0.5 * c);
        let (ma, mb) = (c, 0.5 * c);
        let expect = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * (c2 / c2);
        assert!((ssim(&a, &b).unwrap() - expect).abs() <= 1e-12, "c={c}");
    }
}

#[test]
fn ssim_of_inverted_binary_image_is_negative() {
    let x = GrayImage::from_fn(24, 24, |x, y| if (x / 2 + y / 3) % 2 == 0 { 1.0 } else { 0.0 });
    let inv = x.map(|v| 1.0 - v);
    assert!(ssim(&x, &inv).unwrap() < 0.0);
}

#[test]
fn small_images_are_rejected_by_ssim() {
    let x = GrayImage::from_fn(10, 10, |_, _| 0.5);
    assert!(ssim(&x, &x).is_err());
}

#[test]
fn fsim_decreases_with_noise() {
    let reference = scene(3);
    let scores: Vec<f64> = [0.01, 0.05, 0.1].iter().map(|&s| fsim(&reference, &noisy(&reference, s, 17)).unwrap()).collect();
    assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn metrics_are_symmetric_and_deterministic() {
    let a = scene(5);
    let b = noisy(&scene(6), 0.05, 2);
    assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    assert_eq!(fsim(&a, &b).unwrap(), fsim(&b, &a).unwrap());
    assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    assert_eq!(fsim(&a, &b).unwrap(), fsim(&a, &b).unwrap());
}

proptest! {
    #[test]
    fn psnr_strictly_decreases_with_error(seed in any::<u64>(), k in 1.01f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = GrayImage::from_fn(8, 8, |_, _| 0.5);
        let delta: Vec<f64> = (0..64).map(|_| rng.random_range(-0.1..0.1)).collect();
        let off = |s: f64| GrayImage::from_pixels(8, 8, delta.iter().map(|d| 0.5 + s * d).collect()).unwrap();
        prop_assume!(delta.iter().any(|d| d.abs() > 1e-6));
        prop_assert!(psnr(&base, &off(1.0)).unwrap() > psnr(&base, &off(k)).unwrap());
    }

    #[test]
    fn ssim_is_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = GrayImage::from_pixels(12, 12, (0..144).map(|_| rng.random()).collect()).unwrap();
        let b = GrayImage::from_pixels(12, 12, (0..144).map(|_| rng.random()).collect()).unwrap();
        let (s, t) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert_eq!(s, t);
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
