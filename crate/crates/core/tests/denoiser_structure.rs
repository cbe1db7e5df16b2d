//! Wiring, ablation and guidance-injection properties of the U-Net.

use llie_core::denoiser::{sinusoidal_embed, Denoiser, DenoiserConfig};
use llie_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk() -> DenoiserConfig {
    DenoiserConfig { dropout: 0.0, ..Default::default() }
}

fn random_image(n: usize, s: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(&[n, 1, s, s], (0..n * s * s).map(|_| rng.random()).collect()).unwrap()
}

fn inputs(seed: u64, s: usize) -> (Tensor, Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_image(1, s, &mut rng), random_image(1, s, &mut rng), random_image(1, s, &mut rng))
}

#[test]
fn output_shape_and_determinism() {
    let net = Denoiser::new(desk(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let (l, ht, g) = inputs(2, 32);
    let a = net.predict(&l, &ht, &g, 0.3).unwrap();
    assert_eq!(a.shape(), &[1, 1, 32, 32]);
    assert_eq!(a, net.predict(&l, &ht, &g, 0.3).unwrap());
    assert!(a.is_finite());
    let again = Denoiser::new(desk(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, again.predict(&l, &ht, &g, 0.3).unwrap());
}

#[test]
fn indivisible_extent_is_a_contract_error() {
    let net = Denoiser::new(desk(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let (l, ht, g) = inputs(2, 12);
    assert!(net.predict(&l, &ht, &g, 0.3).is_err());
    let bad = DenoiserConfig { image_size: 20, ..desk() };
    assert!(bad.validate().is_err());
    assert!(DenoiserConfig { depth: 0, ..desk() }.validate().is_err());
}

#[test]
fn decoder_consumes_mirror_skips() {
    let cfg = desk();
    let net = Denoiser::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let (l, ht, g) = inputs(4, 32);
    let mut tape = Tape::new();
    let b = net.bind(&mut tape, false);
    let (lv, hv, gv) = (tape.constant(l), tape.constant(ht), tape.constant(g));
    let (_, trace) = net.forward(&mut tape, &b, lv, hv, gv, &[0.5], None).unwrap();
    assert_eq!(trace.skips.len(), cfg.depth);
    for (i, &s) in trace.skips.iter().enumerate() {
        let e = 32 >> i;
        assert_eq!(tape.shape(s), &[1, cfg.channels(i), e, e]);
    }
    let levels: Vec<usize> = trace.concats.iter().map(|&(lvl, _)| lvl).collect();
    assert_eq!(levels, (0..cfg.depth).rev().collect::<Vec<_>>());
    for &(lvl, cat) in &trace.concats {
        let ins = tape.inputs(cat);
        assert_eq!(ins.len(), 2);
        assert_eq!(ins[1], trace.skips[lvl], "level {lvl}");
        // nothing else in the decoder reads the other levels' skips
        for (j, &s) in trace.skips.iter().enumerate() {
            if j != lvl {
                assert!(!ins.contains(&s));
            }
        }
    }
    assert_eq!(trace.fag_features.len(), cfg.depth + 1);
    for (i, &f) in trace.fag_features.iter().enumerate() {
        let e = 32 >> i;
        // level j is injected after pooling encoder level j-1, keeping its width
        assert_eq!(tape.shape(f), &[1, cfg.channels(i.saturating_sub(1)), e, e]);
    }
}

#[test]
fn disabled_guidance_is_ignored() {
    let mut net = Denoiser::new(desk(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    net.set_fag_enabled(false);
    let (l, ht, g1) = inputs(6, 32);
    let (_, _, g2) = inputs(7, 32);
    let zero = Tensor::zeros(&[1, 1, 32, 32]);
    let a = net.predict(&l, &ht, &g1, 0.7).unwrap();
    assert_eq!(a, net.predict(&l, &ht, &g2, 0.7).unwrap());
    assert_eq!(a, net.predict(&l, &ht, &zero, 0.7).unwrap());
}

#[test]
fn zero_guidance_with_zero_bias_injects_nothing() {
    let cfg = desk();
    let mut net = Denoiser::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    for i in 0..=cfg.depth {
        net.param_mut(&format!("fag{i}.b")).unwrap().data_mut().fill(0.0);
    }
    let (l, ht, _) = inputs(9, 32);
    let zero = Tensor::zeros(&[1, 1, 32, 32]);
    let with = net.predict(&l, &ht, &zero, 0.2).unwrap();
    net.set_fag_enabled(false);
    assert_eq!(with, net.predict(&l, &ht, &zero, 0.2).unwrap());
}

#[test]
fn one_guidance_pixel_moves_the_output() {
    let net = Denoiser::new(desk(), &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let (l, ht, g) = inputs(11, 32);
    let base = net.predict(&l, &ht, &g, 0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let mut probe = g.clone();
        let i = rng.random_range(0..1024);
        probe.data_mut()[i] += 0.25;
        let out = net.predict(&l, &ht, &probe, 0.4).unwrap();
        let diff = out.data().iter().zip(base.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff > 1e-9, "pixel {i} had no effect");
    }
}

#[test]
fn zeroed_time_mlps_remove_noise_level_dependence() {
    let mut net = Denoiser::new(desk(), &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
    let (l, ht, g) = inputs(14, 32);
    assert_ne!(net.predict(&l, &ht, &g, 0.1).unwrap(), net.predict(&l, &ht, &g, 0.9).unwrap());
    let names: Vec<String> = net.params().iter().map(|(n, _)| n.clone()).filter(|n| n.contains(".time2.")).collect();
    assert!(!names.is_empty());
    for n in &names {
        net.param_mut(n).unwrap().data_mut().fill(0.0);
    }
    assert_eq!(net.predict(&l, &ht, &g, 0.1).unwrap(), net.predict(&l, &ht, &g, 0.9).unwrap());
}

#[test]
fn embeddings_separate_noise_levels() {
    let a = sinusoidal_embed(123.0, 32);
    assert_eq!(a, sinusoidal_embed(123.0, 32));
    let b = sinusoidal_embed(124.0, 32);
    let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(dist > 0.0);
    assert!(a.iter().all(|v| v.is_finite()));
}

#[test]
fn batched_forward_matches_single_samples() {
    let net = Denoiser::new(desk(), &mut ChaCha8Rng::seed_from_u64(15)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (l, ht, g) = (random_image(2, 32, &mut rng), random_image(2, 32, &mut rng), random_image(2, 32, &mut rng));
    let mut tape = Tape::new();
    let b = net.bind(&mut tape, false);
    let (lv, hv, gv) = (tape.constant(l.clone()), tape.constant(ht.clone()), tape.constant(g.clone()));
    let (out, _) = net.forward(&mut tape, &b, lv, hv, gv, &[0.3, 0.8], None).unwrap();
    let batched = tape.value(out).clone();
    let half = |t: &Tensor, k: usize| Tensor::new(&[1, 1, 32, 32], t.data()[k * 1024..(k + 1) * 1024].to_vec()).unwrap();
    for (k, gamma) in [(0, 0.3), (1, 0.8)] {
        let single = net.predict(&half(&l, k), &half(&ht, k), &half(&g, k), gamma).unwrap();
        for (a, b) in single.data().iter().zip(&batched.data()[k * 1024..(k + 1) * 1024]) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
