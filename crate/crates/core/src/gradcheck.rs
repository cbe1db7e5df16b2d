//! Central finite-difference audit of the denoiser's loss gradient.

use llie_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::diffusion::{cosine_schedule, draw_training_example, loss_on_tape, NoiseSchedule, TrainingDraw};
use crate::CoreError;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error. With a 1e-5 step the
/// difference quotient carries about 3e-13 of rounding noise, so gradients
/// much smaller than this are compared in absolute terms (to 1e-11).
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

struct Problem {
    l: Tensor,
    guidance: Tensor,
    draw: TrainingDraw,
    sched: NoiseSchedule,
}

fn prediction(net: &Denoiser, p: &Problem) -> Result<Tensor, CoreError> {
    net.predict(&p.l, &p.draw.ht, &p.guidance, p.sched.gamma(p.draw.t))
}

/// `(L(θ+h) − L(θ−h)) / 2h` for the MSE loss, expanded as
/// `Σ (p⁺ − p⁻)(p⁺ + p⁻ − 2ε) / (N·2h)` so the two nearly equal loss values
/// never cancel in floating point.
fn mse_central_difference(plus: &Tensor, minus: &Tensor, eps: &Tensor, h: f64) -> f64 {
    let terms: Vec<f64> = plus
        .data()
        .iter()
        .zip(minus.data())
        .zip(eps.data())
        .map(|((a, b), e)| (a - b) * (a + b - 2.0 * e))
        .collect();
    let n = terms.len();
    let t = Tensor::new(&[n], terms).expect("flat");
    t.sum() / n as f64 / (2.0 * h)
}

/// Compares tape gradients of the diffusion loss with central differences on
/// `samples` parameter entries drawn uniformly from the whole network.
pub fn check_denoiser(cfg: DenoiserConfig, seed: u64, samples: usize) -> Result<GradReport, CoreError> {
    check_denoiser_with_step(cfg, seed, samples, FD_STEP)
}

pub fn check_denoiser_with_step(cfg: DenoiserConfig, seed: u64, samples: usize, step: f64) -> Result<GradReport, CoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = DenoiserConfig { dropout: 0.0, ..cfg };
    let mut net = Denoiser::new(cfg.clone(), &mut rng)?;
    let s = cfg.image_size;
    let mut img = || {
        let data = (0..s * s).map(|_| rng.random::<f64>()).collect();
        Tensor::new(&[1, 1, s, s], data)
    };
    let (l, guidance, h0) = (img()?, img()?, img()?);
    let sched = cosine_schedule(2000, 0.008)?;
    let draw = draw_training_example(&h0, &sched, &mut rng)?;
    let problem = Problem { l, guidance, draw, sched };

    let mut tape = Tape::new();
    let bound = net.bind(&mut tape, true);
    let g = tape.constant(problem.guidance.clone());
    let loss = loss_on_tape(&mut tape, &problem.l, &problem.draw, &problem.sched, |tape, l, ht, gamma| {
        Ok(net.forward(tape, &bound, l, ht, g, &[gamma], None)?.0)
    })?;
    let grads = tape.backward(loss)?;

    let flat: Vec<(usize, usize)> = net
        .params()
        .iter()
        .enumerate()
        .flat_map(|(p, (_, t))| (0..t.len()).map(move |i| (p, i)))
        .collect();
    let mut entries = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (p, i) = flat[rng.random_range(0..flat.len())];
        let analytic = grads.get(bound.vars()[p]).expect("parameter gradient")[i];
        let orig = net.params()[p].1.data()[i];
        net.params_mut()[p].1.data_mut()[i] = orig + step;
        let plus = prediction(&net, &problem)?;
        net.params_mut()[p].1.data_mut()[i] = orig - step;
        let minus = prediction(&net, &problem)?;
        net.params_mut()[p].1.data_mut()[i] = orig;
        let numeric = mse_central_difference(&plus, &minus, &problem.draw.eps, step);
        entries.push(GradEntry {
            name: net.params()[p].0.clone(),
            index: i,
            analytic,
            numeric,
            rel_err: rel_err(analytic, numeric),
        });
    }
    Ok(GradReport { entries })
}
