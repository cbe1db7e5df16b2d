//! Noise schedule, forward chain, tractable posterior and ancestral sampler.
//!
//! Step indices are 1-based: `t = 1..=T`, with `gamma(0) = 1`.

use std::f64::consts::PI;

use llie_tensor::{Tape, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::imaging::GrayImage;
use crate::CoreError;

pub const DEFAULT_STEPS: usize = 2000;
pub const DEFAULT_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    // index 0 holds the t = 0 convention (beta 0, alpha 1, gamma 1)
    beta: Vec<f64>,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
}

/// Cosine schedule. Betas come from the ratio of consecutive `f(t)/f(0)`
/// values, clipped at [`MAX_BETA`]; gamma is then accumulated as the running
/// product of alphas so `gamma[t] = alpha[t]·gamma[t−1]` holds exactly.
pub fn cosine_schedule(steps: usize, offset: f64) -> Result<NoiseSchedule, CoreError> {
    if steps == 0 {
        return Err(CoreError::Contract("schedule needs T >= 1".into()));
    }
    if !(offset > 0.0) {
        return Err(CoreError::Contract(format!("offset must be positive, got {offset}")));
    }
    let f = |t: usize| {
        let x = ((t as f64 / steps as f64 + offset) / (1.0 + offset)) * PI / 2.0;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let ratio = |t: usize| f(t) / f0;
    let mut beta = vec![0.0; steps + 1];
    let mut alpha = vec![1.0; steps + 1];
    let mut gamma = vec![1.0; steps + 1];
    for t in 1..=steps {
        let b = (1.0 - ratio(t) / ratio(t - 1)).min(MAX_BETA);
        beta[t] = b;
        alpha[t] = 1.0 - b;
        gamma[t] = alpha[t] * gamma[t - 1];
    }
    Ok(NoiseSchedule { steps, beta, alpha, gamma })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t]
    }

    fn check_step(&self, t: usize) -> Result<(), CoreError> {
        if t == 0 || t > self.steps {
            return Err(CoreError::Contract(format!("step {t} outside 1..={}", self.steps)));
        }
        Ok(())
    }

    /// `t,beta,alpha,gamma` rows from `t = 0`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,beta,alpha,gamma\n");
        for t in 0..=self.steps {
            s.push_str(&format!("{t},{:e},{:e},{:e}\n", self.beta[t], self.alpha[t], self.gamma[t]));
        }
        s
    }
}

pub fn standard_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape, data).expect("length matches shape")
}

fn affine(a: &Tensor, ca: f64, b: &Tensor, cb: f64) -> Result<Tensor, CoreError> {
    Ok(a.zip_with(b, |x, y| ca * x + cb * y)?)
}

/// Closed-form marginal `h_t = √γ_t·h0 + √(1−γ_t)·ε`.
pub fn forward_diffuse(h0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor, CoreError> {
    sched.check_step(t)?;
    let g = sched.gamma(t);
    affine(h0, g.sqrt(), eps, (1.0 - g).sqrt())
}

/// Runs `t` single transitions `h_s = √α_s·h_{s−1} + √β_s·z`.
pub fn compose_steps<R: Rng + ?Sized>(h0: &Tensor, t: usize, sched: &NoiseSchedule, rng: &mut R) -> Result<Tensor, CoreError> {
    sched.check_step(t)?;
    let mut h = h0.clone();
    for s in 1..=t {
        let z = standard_normal(h.shape(), rng);
        h = affine(&h, sched.alpha(s).sqrt(), &z, sched.beta(s).sqrt())?;
    }
    Ok(h)
}

/// Coefficients `(c_ht, c_h0, beta_tilde)` of the Gaussian posterior `q(h_{t−1} | h_t, h0)`.
pub fn posterior_coefficients(t: usize, sched: &NoiseSchedule) -> Result<(f64, f64, f64), CoreError> {
    sched.check_step(t)?;
    let (a, g, g_prev) = (sched.alpha(t), sched.gamma(t), sched.gamma(t - 1));
    let c_ht = a.sqrt() * (1.0 - g_prev) / (1.0 - g);
    let c_h0 = g_prev.sqrt() * (1.0 - a) / (1.0 - g);
    let beta_tilde = (1.0 - g_prev) * (1.0 - a) / (1.0 - g);
    Ok((c_ht, c_h0, beta_tilde))
}

pub fn posterior_params(h0: &Tensor, ht: &Tensor, t: usize, sched: &NoiseSchedule) -> Result<(Tensor, f64), CoreError> {
    let (c_ht, c_h0, beta_tilde) = posterior_coefficients(t, sched)?;
    Ok((affine(ht, c_ht, h0, c_h0)?, beta_tilde))
}

/// Reverse mean from a noise prediction.
pub fn reverse_mean(ht: &Tensor, eps_pred: &Tensor, t: usize, sched: &NoiseSchedule) -> Result<Tensor, CoreError> {
    sched.check_step(t)?;
    if ht.shape() != eps_pred.shape() {
        return Err(CoreError::Contract(format!(
            "noise prediction shape {:?} differs from state {:?}",
            eps_pred.shape(),
            ht.shape()
        )));
    }
    let (a, g) = (sched.alpha(t), sched.gamma(t));
    let inv = 1.0 / a.sqrt();
    affine(ht, inv, eps_pred, -inv * (1.0 - a) / (1.0 - g).sqrt())
}

/// A noise predictor `f(l, h_t, γ_t)`.
pub trait EpsilonModel {
    fn predict(&self, l: &Tensor, ht: &Tensor, gamma: f64) -> Result<Tensor, CoreError>;
}

impl<F> EpsilonModel for F
where
    F: Fn(&Tensor, &Tensor, f64) -> Result<Tensor, CoreError>,
{
    fn predict(&self, l: &Tensor, ht: &Tensor, gamma: f64) -> Result<Tensor, CoreError> {
        self(l, ht, gamma)
    }
}

/// How a reverse step turns a noise prediction into a mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanRule {
    /// [`reverse_mean`] as is.
    Direct,
    /// Posterior mean around the implied clean image clamped to `[0, 1]`.
    /// Equal to `Direct` whenever that estimate is already in range; keeps
    /// an imperfect network from feeding its own out-of-range states back
    /// in (the first step under a clipped beta scales noise errors by ~30).
    #[default]
    Clamped,
}

/// `h0 ≈ (h_t − √(1−γ)·ε) / √γ`, clamped to `[0, 1]`, then pushed through the
/// posterior mean.
pub fn clamped_reverse_mean(ht: &Tensor, eps_pred: &Tensor, t: usize, sched: &NoiseSchedule) -> Result<Tensor, CoreError> {
    sched.check_step(t)?;
    let g = sched.gamma(t);
    let (sg, sn) = (g.sqrt(), (1.0 - g).sqrt());
    let h0 = ht.zip_with(eps_pred, |h, e| ((h - sn * e) / sg).clamp(0.0, 1.0))?;
    Ok(posterior_params(&h0, ht, t, sched)?.0)
}

/// One ancestral step; adds `√β̃·z` for `t > 1` and returns the mean at `t = 1`.
pub fn reverse_step<M: EpsilonModel + ?Sized, R: Rng + ?Sized>(
    l: &Tensor,
    ht: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
    net: &M,
    rng: &mut R,
) -> Result<Tensor, CoreError> {
    reverse_step_with(l, ht, t, sched, net, MeanRule::Direct, rng)
}

pub fn reverse_step_with<M: EpsilonModel + ?Sized, R: Rng + ?Sized>(
    l: &Tensor,
    ht: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
    net: &M,
    rule: MeanRule,
    rng: &mut R,
) -> Result<Tensor, CoreError> {
    let eps = net.predict(l, ht, sched.gamma(t))?;
    let mean = match rule {
        MeanRule::Direct => reverse_mean(ht, &eps, t, sched)?,
        MeanRule::Clamped => clamped_reverse_mean(ht, &eps, t, sched)?,
    };
    if t == 1 {
        return Ok(mean);
    }
    let (_, _, beta_tilde) = posterior_coefficients(t, sched)?;
    let z = standard_normal(ht.shape(), rng);
    affine(&mean, 1.0, &z, beta_tilde.sqrt())
}

/// Gray image as a `[1, 1, H, W]` tensor.
pub fn image_tensor(img: &GrayImage) -> Tensor {
    Tensor::new(&[1, 1, img.height(), img.width()], img.pixels().to_vec()).expect("extent matches")
}

/// Full reverse chain from `h_T ~ N(0, I)` with [`MeanRule::Direct`],
/// clamped to `[0, 1]`.
pub fn sample<M: EpsilonModel + ?Sized, R: Rng + ?Sized>(
    l: &GrayImage,
    sched: &NoiseSchedule,
    net: &M,
    rng: &mut R,
) -> Result<GrayImage, CoreError> {
    sample_with(l, sched, net, MeanRule::Direct, rng)
}

pub fn sample_with<M: EpsilonModel + ?Sized, R: Rng + ?Sized>(
    l: &GrayImage,
    sched: &NoiseSchedule,
    net: &M,
    rule: MeanRule,
    rng: &mut R,
) -> Result<GrayImage, CoreError> {
    let lt = image_tensor(l);
    let mut h = standard_normal(lt.shape(), rng);
    for t in (1..=sched.steps()).rev() {
        h = reverse_step_with(&lt, &h, t, sched, net, rule, rng)?;
        if !h.is_finite() {
            return Err(CoreError::Numeric(format!("sampler state became non-finite at step {t}")));
        }
    }
    let pixels = h.into_data().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    GrayImage::from_pixels(l.width(), l.height(), pixels)
}

/// A training example: step, noise and the noised target.
#[derive(Clone, Debug)]
pub struct TrainingDraw {
    pub t: usize,
    pub eps: Tensor,
    pub ht: Tensor,
}

pub fn draw_training_example<R: Rng + ?Sized>(h0: &Tensor, sched: &NoiseSchedule, rng: &mut R) -> Result<TrainingDraw, CoreError> {
    let t = rng.random_range(1..=sched.steps());
    let eps = standard_normal(h0.shape(), rng);
    let ht = forward_diffuse(h0, t, &eps, sched)?;
    Ok(TrainingDraw { t, eps, ht })
}

/// Noise-prediction loss `mean((f(l, h_t, γ_t) − ε)²)` without gradients.
pub fn loss<M: EpsilonModel + ?Sized, R: Rng + ?Sized>(
    net: &M,
    l: &Tensor,
    h0: &Tensor,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64, CoreError> {
    let d = draw_training_example(h0, sched, rng)?;
    let pred = net.predict(l, &d.ht, sched.gamma(d.t))?;
    let sq = pred.zip_with(&d.eps, |a, b| (a - b) * (a - b))?;
    Ok(sq.mean())
}

/// Same loss recorded on a tape. `forward` receives the conditioning and
/// noised-state leaves and the noise level and returns the prediction.
pub fn loss_on_tape<F>(
    tape: &mut Tape,
    l: &Tensor,
    draw: &TrainingDraw,
    sched: &NoiseSchedule,
    forward: F,
) -> Result<Var, CoreError>
where
    F: FnOnce(&mut Tape, Var, Var, f64) -> Result<Var, CoreError>,
{
    let lv = tape.constant(l.clone());
    let hv = tape.constant(draw.ht.clone());
    let pred = forward(tape, lv, hv, sched.gamma(draw.t))?;
    let target = tape.constant(draw.eps.clone());
    Ok(tape.mse(pred, target)?)
}
