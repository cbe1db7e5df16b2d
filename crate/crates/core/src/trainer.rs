//! Optimization loop, learning-rate schedule, synthetic paired scenes and
//! evaluation tables.

use std::f64::consts::PI;

use llie_tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserConfig, Dropout, Guided};
use crate::diffusion::{self, cosine_schedule, MeanRule, draw_training_example, image_tensor, loss_on_tape, NoiseSchedule};
use crate::imaging::{Augment, ExposureTag, GrayImage, ImagePair};
use crate::metrics::{self, QualityScores};
use crate::spectral;
use crate::CoreError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(warmup_steps: usize, peak_lr: f64, total_steps: usize) -> Result<Self, CoreError> {
        if warmup_steps == 0 || warmup_steps >= total_steps {
            return Err(CoreError::Contract(format!(
                "need 0 < warmup_steps ({warmup_steps}) < total_steps ({total_steps})"
            )));
        }
        if !(peak_lr > 0.0) {
            return Err(CoreError::Contract(format!("peak_lr must be positive, got {peak_lr}")));
        }
        Ok(Self { warmup_steps, peak_lr, total_steps })
    }
}

/// Linear warm-up to the peak, then cosine annealing to zero.
pub fn lr_at(step: usize, s: &LrSchedule) -> f64 {
    if step < s.warmup_steps {
        s.peak_lr * step as f64 / s.warmup_steps as f64
    } else if step >= s.total_steps {
        0.0
    } else {
        let progress = (step - s.warmup_steps) as f64 / (s.total_steps - s.warmup_steps) as f64;
        s.peak_lr * (1.0 + (PI * progress).cos()) / 2.0
    }
}

/// Adaptive moment estimation. A tensor whose gradient is entirely zero is
/// skipped: neither it nor its moment estimates change.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: Vec<i32>,
}

impl Adam {
    pub fn new(params: &[(String, Tensor)]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
            t: vec![0; params.len()],
        }
    }

    pub fn step(&mut self, params: &mut [(String, Tensor)], grads: &[Vec<f64>], lr: f64) {
        for (k, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            self.t[k] += 1;
            let c1 = 1.0 - self.beta1.powi(self.t[k]);
            let c2 = 1.0 - self.beta2.powi(self.t[k]);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Parameters of one synthetic scene and its degradation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSceneSpec {
    pub seed: u64,
    pub size: usize,
    pub shapes: usize,
    pub gain: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl SynthSceneSpec {
    fn validate(&self) -> Result<(), CoreError> {
        if self.size == 0 {
            return Err(CoreError::Contract("scene size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gain) || !(self.gamma > 0.0) || !(self.sigma >= 0.0) {
            return Err(CoreError::Contract(format!(
                "invalid degradation gain={} gamma={} sigma={}",
                self.gain, self.gamma, self.sigma
            )));
        }
        Ok(())
    }
}

const SUPERSAMPLE: usize = 4;

/// Convex polygon as counter-clockwise vertices.
fn inside_convex(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    (0..poly.len()).all(|i| {
        let (ax, ay) = poly[i];
        let (bx, by) = poly[(i + 1) % poly.len()];
        (bx - ax) * (y - ay) - (by - ay) * (x - ax) >= 0.0
    })
}

/// Normal-light scene: one shaded panel plus anti-aliased convex polygons on
/// black, and its darkened, noisy low-light counterpart.
pub fn synth_pair(spec: &SynthSceneSpec) -> Result<ImagePair, CoreError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.size as f64;
    let mut scene = GrayImage::filled(spec.size, spec.size, 0.0);

    // Panel lit from a random direction: brightness follows cos of the angle
    // between the bent surface normal and the light.
    let (pw, ph) = (rng.random_range(0.3..0.6) * n, rng.random_range(0.15..0.35) * n);
    let (px, py) = (rng.random_range(0.0..n - pw), rng.random_range(0.0..n - ph));
    let albedo = rng.random_range(0.6..0.95);
    let light = rng.random_range(-0.6..0.6);
    let cover = |x0: f64, y0: f64, f: &dyn Fn(f64, f64) -> bool| {
        let mut hits = 0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let x = x0 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                let y = y0 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                if f(x, y) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
    };
    for y in 0..spec.size {
        for x in 0..spec.size {
            let c = cover(x as f64, y as f64, &|sx, sy| sx >= px && sx < px + pw && sy >= py && sy < py + ph);
            if c > 0.0 {
                let u = ((x as f64 + 0.5 - px) / pw).clamp(0.0, 1.0);
                let normal = (u - 0.5) * 1.2;
                let shade = albedo * (normal - light).cos().max(0.0);
                scene.set(x, y, c * shade);
            }
        }
    }
    for _ in 0..spec.shapes {
        let (cx, cy) = (rng.random_range(0.15..0.85) * n, rng.random_range(0.15..0.85) * n);
        let r = rng.random_range(0.08..0.2) * n;
        let k = rng.random_range(3..7usize);
        let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let poly: Vec<(f64, f64)> = angles.iter().map(|a| (cx + r * a.cos(), cy + r * a.sin())).collect();
        let level = rng.random_range(0.45..1.0);
        for y in 0..spec.size {
            for x in 0..spec.size {
                let c = cover(x as f64, y as f64, &|sx, sy| inside_convex(&poly, sx, sy));
                if c > 0.0 {
                    let v = scene.get(x, y);
                    scene.set(x, y, v * (1.0 - c) + level * c);
                }
            }
        }
    }
    let mut low = scene.clone();
    for v in low.pixels_mut() {
        let mut d = spec.gain * v.powf(spec.gamma);
        if spec.sigma > 0.0 {
            d += spec.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        *v = d.clamp(0.0, 1.0);
    }
    ImagePair::new(low, scene, 0, ExposureTag::Us1248)
}

/// Deterministic dataset of `count` pairs with varied degradations.
pub fn synth_dataset(count: usize, size: usize, seed: u64) -> Result<Vec<ImagePair>, CoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let spec = SynthSceneSpec {
                seed: rng.random(),
                size,
                shapes: rng.random_range(1..4),
                gain: rng.random_range(0.15..0.35),
                gamma: rng.random_range(1.4..2.2),
                sigma: rng.random_range(0.005..0.02),
            };
            synth_pair(&spec)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Fraction of all optimizer steps spent warming up.
    pub warmup_fraction: f64,
    pub diffusion_steps: usize,
    pub schedule_offset: f64,
    pub val_fraction: f64,
    pub augment: bool,
    pub fag_lambda: f64,
    pub fag_cutoff: f64,
    pub checkpoint_every: usize,
    /// Reverse-mean rule used when enhancing with this model.
    pub mean_rule: MeanRule,
    pub denoiser: DenoiserConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            batch_size: 4,
            peak_lr: 1e-4,
            warmup_fraction: 0.05,
            diffusion_steps: diffusion::DEFAULT_STEPS,
            schedule_offset: diffusion::DEFAULT_OFFSET,
            val_fraction: 0.1,
            augment: true,
            fag_lambda: spectral::DEFAULT_LAMBDA,
            fag_cutoff: spectral::DEFAULT_CUTOFF,
            checkpoint_every: 0,
            mean_rule: MeanRule::default(),
            denoiser: DenoiserConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, CoreError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CoreError::Data(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        self.denoiser.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::Contract("epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) || !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(CoreError::Contract("fractions must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, CoreError> {
        cosine_schedule(self.diffusion_steps, self.schedule_offset)
    }

    pub fn enhance_settings(&self) -> EnhanceSettings {
        EnhanceSettings { lambda: self.fag_lambda, cutoff: self.fag_cutoff, mean_rule: self.mean_rule }
    }
}

/// Guidance parameters and reverse-mean rule for enhancement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnhanceSettings {
    pub lambda: f64,
    pub cutoff: f64,
    pub mean_rule: MeanRule,
}

impl Default for EnhanceSettings {
    fn default() -> Self {
        TrainConfig::default().enhance_settings()
    }
}

/// Guidance map of a gray low-light image as a `[1,1,H,W]` tensor.
pub fn guidance_tensor(low: &GrayImage, lambda: f64, cutoff: f64) -> Result<Tensor, CoreError> {
    let g = spectral::fag(&low.to_rgb(), lambda, cutoff)?;
    Ok(image_tensor(&g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub const CURVE_HEADER: &str = "epoch,lr,train_loss,val_loss";

pub fn curve_csv(curve: &[EpochRecord]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for r in curve {
        s.push_str(&format!("{},{:e},{:e},{:e}\n", r.epoch, r.lr, r.train_loss, r.val_loss));
    }
    s
}

pub struct TrainOutcome {
    pub net: Denoiser,
    pub curve: Vec<EpochRecord>,
}

struct Example {
    l: Tensor,
    h0: Tensor,
    guidance: Tensor,
}

fn prepare(pair: &ImagePair, cfg: &TrainConfig) -> Result<Example, CoreError> {
    Ok(Example {
        l: image_tensor(&pair.low),
        h0: image_tensor(&pair.high),
        guidance: guidance_tensor(&pair.low, cfg.fag_lambda, cfg.fag_cutoff)?,
    })
}

/// Loss and gradients for one example; dropout is active iff `rng` is given.
fn example_loss(
    net: &Denoiser,
    ex: &Example,
    sched: &NoiseSchedule,
    draw_rng: &mut ChaCha8Rng,
    dropout_rng: Option<&mut ChaCha8Rng>,
    want_grads: bool,
) -> Result<(f64, Vec<Vec<f64>>), CoreError> {
    let draw = draw_training_example(&ex.h0, sched, draw_rng)?;
    let mut tape = Tape::new();
    let b = net.bind(&mut tape, want_grads);
    let g = tape.constant(ex.guidance.clone());
    let rate = net.config().dropout;
    let dropout = dropout_rng.map(|rng| Dropout { rate, rng });
    let loss = loss_on_tape(&mut tape, &ex.l, &draw, sched, |tape, l, ht, gamma| {
        Ok(net.forward(tape, &b, l, ht, g, &[gamma], dropout)?.0)
    })?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    if !want_grads {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(loss)?;
    let out = b
        .vars()
        .iter()
        .map(|&v| grads.take(v).unwrap_or_default())
        .collect();
    Ok((value, out))
}

fn nan_report(epoch: usize, step: usize, lr: f64, net: &Denoiser) -> String {
    let mut s = format!("non-finite loss at epoch {epoch}, step {step}, lr {lr:e}; parameter norms:");
    for (name, t) in net.params() {
        let norm = t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        s.push_str(&format!(" {name}={norm:e}"));
    }
    s
}

/// Trains a fresh network on `pairs`. The validation split, batch order,
/// augmentations, noise draws and dropout masks all derive from `cfg.seed`.
pub fn train(
    cfg: &TrainConfig,
    pairs: &[ImagePair],
    mut on_epoch: impl FnMut(&EpochRecord, &Denoiser) -> Result<(), CoreError>,
) -> Result<TrainOutcome, CoreError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(CoreError::Data("training set is empty".into()));
    }
    let sched = cfg.schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Denoiser::new(cfg.denoiser.clone(), &mut rng)?;

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((pairs.len() as f64) * cfg.val_fraction).round() as usize;
    let n_val = n_val.min(pairs.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<Example> = val_idx.iter().map(|&i| prepare(&pairs[i], cfg)).collect::<Result<_, _>>()?;
    let train_pairs: Vec<&ImagePair> = train_idx.iter().map(|&i| &pairs[i]).collect();

    let steps_per_epoch = train_pairs.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let warmup = ((total as f64 * cfg.warmup_fraction).round() as usize).clamp(1, total.saturating_sub(1).max(1));
    let lr_sched = LrSchedule::new(warmup, cfg.peak_lr, total.max(2))?;
    let mut adam = Adam::new(net.params());
    let val_seed: u64 = rng.random();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let mut idx: Vec<usize> = (0..train_pairs.len()).collect();
        idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = 0.0;
        for batch in idx.chunks(cfg.batch_size) {
            lr = lr_at(step, &lr_sched);
            let mut sum: Vec<Vec<f64>> = net.params().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let op = if cfg.augment { Augment::ALL[rng.random_range(0..Augment::ALL.len())] } else { Augment::Identity };
                let ex = prepare(&train_pairs[i].augment(op), cfg)?;
                let mut draw_rng = ChaCha8Rng::seed_from_u64(rng.random());
                let mut drop_rng = ChaCha8Rng::seed_from_u64(rng.random());
                let (loss, grads) = example_loss(&net, &ex, &sched, &mut draw_rng, Some(&mut drop_rng), true)?;
                if !loss.is_finite() {
                    return Err(CoreError::Numeric(nan_report(epoch, step, lr, &net)));
                }
                batch_loss += loss;
                for (acc, g) in sum.iter_mut().zip(&grads) {
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            sum.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= scale));
            adam.step(net.params_mut(), &sum, lr);
            epoch_loss += batch_loss;
            step += 1;
        }
        let train_loss = epoch_loss / train_pairs.len() as f64;
        // same noise draws every epoch so validation losses are comparable
        let mut vrng = ChaCha8Rng::seed_from_u64(val_seed);
        let mut val_loss = 0.0;
        for ex in &val {
            val_loss += example_loss(&net, ex, &sched, &mut vrng, None, false)?.0;
        }
        let val_loss = if val.is_empty() { f64::NAN } else { val_loss / val.len() as f64 };
        if !train_loss.is_finite() {
            return Err(CoreError::Numeric(nan_report(epoch, step, lr, &net)));
        }
        let rec = EpochRecord { epoch, lr, train_loss, val_loss };
        on_epoch(&rec, &net)?;
        curve.push(rec);
    }
    Ok(TrainOutcome { net, curve })
}

/// Runs the full reverse chain on a low-light image.
pub fn enhance(net: &Denoiser, low: &GrayImage, sched: &NoiseSchedule, settings: &EnhanceSettings, seed: u64) -> Result<GrayImage, CoreError> {
    let guided = Guided { net, guidance: guidance_tensor(low, settings.lambda, settings.cutoff)? };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    diffusion::sample_with(low, sched, &guided, settings.mean_rule, &mut rng)
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub enhanced: Vec<QualityScores>,
    pub raw: Vec<QualityScores>,
}

impl EvalReport {
    pub fn mean_enhanced(&self) -> QualityScores {
        QualityScores::mean(&self.enhanced)
    }

    pub fn mean_raw(&self) -> QualityScores {
        QualityScores::mean(&self.raw)
    }
}

/// Enhances every test image (image `i` uses seed `seed + i`) and scores it
/// against ground truth, alongside the raw low-light input.
pub fn evaluate(
    net: &Denoiser,
    pairs: &[ImagePair],
    sched: &NoiseSchedule,
    settings: &EnhanceSettings,
    seed: u64,
) -> Result<EvalReport, CoreError> {
    let mut enhanced = Vec::with_capacity(pairs.len());
    let mut raw = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let out = enhance(net, &p.low, sched, settings, seed.wrapping_add(i as u64))?;
        enhanced.push(metrics::score(&out, &p.high)?);
        raw.push(metrics::score(&p.low, &p.high)?);
    }
    Ok(EvalReport { enhanced, raw })
}

/// Metric rows with "without guidance" and "with guidance" columns.
pub fn guidance_table(without: &QualityScores, with: &QualityScores) -> String {
    format!(
        "metric,without guidance,with guidance\n\
         PSNR,{:.4},{:.4}\nSSIM,{:.4},{:.4}\nFSIM,{:.4},{:.4}\nLPIPS,n/a,n/a\n",
        without.psnr, with.psnr, without.ssim, with.ssim, without.fsim, with.fsim
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_landmarks() {
        let s = LrSchedule::new(10, 1e-4, 110).unwrap();
        assert_eq!(lr_at(0, &s), 0.0);
        assert_eq!(lr_at(10, &s), 1e-4);
        assert_eq!(lr_at(110, &s), 0.0);
        assert!((lr_at(60, &s) - 5e-5).abs() < 1e-18);
        assert!(LrSchedule::new(0, 1e-4, 10).is_err());
        assert!(LrSchedule::new(10, 1e-4, 10).is_err());
        assert!(LrSchedule::new(1, 0.0, 10).is_err());
    }

    #[test]
    fn adam_skips_zero_gradients() {
        let mut p = vec![("a".to_string(), Tensor::full(&[2], 1.0)), ("b".to_string(), Tensor::full(&[2], 1.0))];
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &[vec![1.0, -1.0], vec![0.0, 0.0]], 0.1);
        assert_eq!(p[1].1.data(), &[1.0, 1.0]);
        // first bias-corrected step moves by lr·sign(g)
        assert!((p[0].1.data()[0] - 0.9).abs() < 1e-6);
        let before = p[0].1.clone();
        opt.step(&mut p, &[vec![0.0, 0.0], vec![0.0, 0.0]], 0.1);
        assert_eq!(p[0].1, before);
    }

    #[test]
    fn identity_degradation() {
        let spec = SynthSceneSpec { seed: 5, size: 16, shapes: 2, gain: 1.0, gamma: 1.0, sigma: 0.0 };
        let p = synth_pair(&spec).unwrap();
        assert_eq!(p.low, p.high);
        assert!(p.high.pixels().iter().any(|&v| v > 0.1));
    }

    #[test]
    fn zero_gain_is_clamped_noise() {
        let spec = SynthSceneSpec { seed: 5, size: 16, shapes: 2, gain: 0.0, gamma: 1.0, sigma: 0.05 };
        let p = synth_pair(&spec).unwrap();
        assert!(p.low.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mean = p.low.mean();
        // half-normal mean of clamped N(0, σ²) is σ/√(2π)
        assert!((mean - 0.05 / (2.0 * PI).sqrt()).abs() < 0.01, "{mean}");
    }

    #[test]
    fn darkening_lowers_mean() {
        for seed in 0..10 {
            let spec = SynthSceneSpec { seed, size: 16, shapes: 2, gain: 0.3, gamma: 1.8, sigma: 0.01 };
            let p = synth_pair(&spec).unwrap();
            assert!(p.low.mean() < p.high.mean());
        }
    }

    #[test]
    fn table_layout() {
        let a = QualityScores { psnr: 20.0, ssim: 0.5, fsim: 0.8 };
        let t = guidance_table(&a, &a);
        assert!(t.starts_with("metric,without guidance,with guidance\nPSNR,20.0000,20.0000\n"));
        assert!(t.ends_with("LPIPS,n/a,n/a\n"));
    }
}
