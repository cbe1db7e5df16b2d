//! FAG-guided U-Net noise predictor `f(l, h_t, γ_t)`.
//!
//! Level `i` of the encoder runs at `size/2^i` with `base·2^i` channels.
//! Each level is a residual block whose output is kept as the skip, then a
//! 2×2 pool, then the guidance feature for the pooled scale is added. The
//! guidance pyramid has `depth + 1` convolutions: a 3×3 one injected right
//! after the input convolution and one `2^k`-strided patch convolution per
//! pooled scale.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use llie_tensor::{read_checkpoint, write_checkpoint, PoolMode, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::EpsilonModel;
use crate::CoreError;

/// Factor applied to `γ_t` before the sinusoidal encoder.
pub const GAMMA_EMBED_SCALE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Max,
}

impl From<Pooling> for PoolMode {
    fn from(p: Pooling) -> Self {
        match p {
            Pooling::Mean => PoolMode::Mean,
            Pooling::Max => PoolMode::Max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub image_size: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub time_embed_dim: usize,
    pub fag_enabled: bool,
    pub dropout: f64,
    pub pooling: Pooling,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            depth: 3,
            base_channels: 16,
            time_embed_dim: 32,
            fag_enabled: true,
            dropout: 0.1,
            pooling: Pooling::Mean,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |m: String| Err(CoreError::Contract(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return bad(format!("time_embed_dim must be even and >= 2, got {}", self.time_embed_dim));
        }
        if self.image_size == 0 || self.image_size % (1 << self.depth) != 0 {
            return bad(format!(
                "image_size {} not divisible by 2^{}",
                self.image_size, self.depth
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn from_toml(text: &str) -> Result<Self, CoreError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CoreError::Data(format!("denoiser config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `[sin(x·ω_0..), cos(x·ω_0..)]` with `ω_k` geometric from 1 down to 1e-4.
pub fn sinusoidal_embed(x: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let omega = |k: usize| {
        if half <= 1 {
            1.0
        } else {
            10000f64.powf(-(k as f64) / (half - 1) as f64)
        }
    };
    let mut out = Vec::with_capacity(dim);
    out.extend((0..half).map(|k| (x * omega(k)).sin()));
    out.extend((0..half).map(|k| (x * omega(k)).cos()));
    out
}

/// Per-parameter shape and fan-in, in canonical order.
fn layout(cfg: &DenoiserConfig) -> Vec<(String, Vec<usize>, usize)> {
    let mut out = Vec::new();
    let e = cfg.time_embed_dim;
    let conv = |out: &mut Vec<_>, name: &str, f: usize, c: usize, k: usize| {
        out.push((format!("{name}.w"), vec![f, c, k, k], c * k * k));
        out.push((format!("{name}.b"), vec![f], c * k * k));
    };
    let res = |out: &mut Vec<(String, Vec<usize>, usize)>, name: &str, cin: usize, cout: usize| {
        out.push((format!("{name}.time1.w"), vec![e, e], e));
        out.push((format!("{name}.time1.b"), vec![e], e));
        out.push((format!("{name}.time2.w"), vec![e, cout], e));
        out.push((format!("{name}.time2.b"), vec![cout], e));
        for (n, f, c, k) in [("conv1", cout, cin, 3), ("conv2", cout, cout, 3)] {
            out.push((format!("{name}.{n}.w"), vec![f, c, k, k], c * k * k));
            out.push((format!("{name}.{n}.b"), vec![f], c * k * k));
        }
        if cin != cout {
            out.push((format!("{name}.skip.w"), vec![cout, cin, 1, 1], cin));
            out.push((format!("{name}.skip.b"), vec![cout], cin));
        }
    };
    let d = cfg.depth;
    conv(&mut out, "conv_in", cfg.channels(0), 2, 3);
    conv(&mut out, "fag0", cfg.channels(0), 1, 3);
    for i in 0..d {
        let k = 1 << (i + 1);
        conv(&mut out, &format!("fag{}", i + 1), cfg.channels(i), 1, k);
    }
    for i in 0..d {
        let cin = if i == 0 { cfg.channels(0) } else { cfg.channels(i - 1) };
        res(&mut out, &format!("enc{i}"), cin, cfg.channels(i));
    }
    res(&mut out, "mid", cfg.channels(d - 1), cfg.channels(d - 1));
    for i in (0..d).rev() {
        let cin = if i == d - 1 { cfg.channels(d - 1) } else { cfg.channels(i + 1) };
        // transposed kernel is [in, out, 2, 2]
        out.push((format!("up{i}.w"), vec![cin, cfg.channels(i), 2, 2], cin));
        out.push((format!("up{i}.b"), vec![cfg.channels(i)], cin));
        res(&mut out, &format!("dec{i}"), 2 * cfg.channels(i), cfg.channels(i));
    }
    conv(&mut out, "conv_out", 1, cfg.channels(0), 3);
    out
}

/// Network parameters handles on a tape, in [`Denoiser::params`] order.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Which skip activations the decoder consumed; checked structurally in tests.
#[derive(Clone, Debug, Default)]
pub struct ForwardTrace {
    /// Encoder outputs before pooling, shallowest first.
    pub skips: Vec<Var>,
    /// `(decoder level, concat node)` in execution order.
    pub concats: Vec<(usize, Var)>,
    /// Guidance features added at each scale, full resolution first.
    pub fag_features: Vec<Var>,
}

/// Dropout state for a training forward pass.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn rand::RngCore,
}

#[derive(Clone, Debug)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    params: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(cfg: DenoiserConfig, rng: &mut R) -> Result<Self, CoreError> {
        cfg.validate()?;
        let params = layout(&cfg)
            .into_iter()
            .map(|(name, shape, fan_in)| (name, Tensor::uniform_fan_in(&shape, fan_in, rng)))
            .collect();
        Ok(Self::from_parts(cfg, params))
    }

    fn from_parts(cfg: DenoiserConfig, params: Vec<(String, Tensor)>) -> Self {
        let index = params.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
        Self { cfg, params, index }
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].1)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.params[i].1)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn set_fag_enabled(&mut self, on: bool) {
        self.cfg.fag_enabled = on;
    }

    /// Registers every parameter on `tape`; `trainable` decides whether
    /// gradients are tracked.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(_, t)| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Bound { vars }
    }

    fn var(&self, b: &Bound, name: &str) -> Var {
        b.vars[self.index[name]]
    }

    fn conv(&self, tape: &mut Tape, b: &Bound, name: &str, x: Var, stride: usize, padding: usize) -> Result<Var, CoreError> {
        let (w, bias) = (self.var(b, &format!("{name}.w")), self.var(b, &format!("{name}.b")));
        Ok(tape.conv2d(x, w, Some(bias), stride, padding)?)
    }

    fn time_mlp(&self, tape: &mut Tape, b: &Bound, name: &str, s: Var) -> Result<Var, CoreError> {
        let h = tape.linear(s, self.var(b, &format!("{name}.time1.w")), Some(self.var(b, &format!("{name}.time1.b"))))?;
        let h = tape.silu(h);
        Ok(tape.linear(h, self.var(b, &format!("{name}.time2.w")), Some(self.var(b, &format!("{name}.time2.b"))))?)
    }

    fn res_block(
        &self,
        tape: &mut Tape,
        b: &Bound,
        name: &str,
        x: Var,
        s: Var,
        dropout: &mut Option<Dropout<'_>>,
    ) -> Result<Var, CoreError> {
        let a = tape.silu(x);
        let h = self.conv(tape, b, &format!("{name}.conv1"), a, 1, 1)?;
        let t = self.time_mlp(tape, b, name, s)?;
        let h = tape.add_sample_channel(h, t)?;
        let mut h = tape.silu(h);
        if let Some(d) = dropout.as_mut() {
            if d.rate > 0.0 {
                let keep = 1.0 / (1.0 - d.rate);
                let n = tape.value(h).len();
                let mask: Vec<f64> = (0..n)
                    .map(|_| if d.rng.random::<f64>() < d.rate { 0.0 } else { keep })
                    .collect();
                let shape = tape.shape(h).to_vec();
                let m = tape.constant(Tensor::new(&shape, mask)?);
                h = tape.mul(h, m)?;
            }
        }
        let h = self.conv(tape, b, &format!("{name}.conv2"), h, 1, 1)?;
        let shortcut = if self.index.contains_key(&format!("{name}.skip.w")) {
            self.conv(tape, b, &format!("{name}.skip"), x, 1, 0)?
        } else {
            x
        };
        Ok(tape.add(h, shortcut)?)
    }

    /// Predicted noise `[N,1,H,W]` for conditioning `l`, state `ht` and
    /// guidance `g` (all `[N,1,H,W]`), with one `γ` per sample.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bound,
        l: Var,
        ht: Var,
        guidance: Var,
        gammas: &[f64],
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<(Var, ForwardTrace), CoreError> {
        let shape = tape.shape(ht).to_vec();
        let n = shape[0];
        if shape.len() != 4 || shape[1] != 1 {
            return Err(CoreError::Contract(format!("state must be [N,1,H,W], got {shape:?}")));
        }
        let step = 1usize << self.cfg.depth;
        if shape[2] % step != 0 || shape[3] % step != 0 {
            return Err(CoreError::Contract(format!(
                "extent {}x{} not divisible by 2^{}",
                shape[3], shape[2], self.cfg.depth
            )));
        }
        if tape.shape(l) != shape.as_slice() || tape.shape(guidance) != shape.as_slice() {
            return Err(CoreError::Contract(format!(
                "conditioning {:?} and guidance {:?} must match state {shape:?}",
                tape.shape(l),
                tape.shape(guidance)
            )));
        }
        if gammas.len() != n {
            return Err(CoreError::Contract(format!("{} noise levels for batch of {n}", gammas.len())));
        }
        let e = self.cfg.time_embed_dim;
        let emb: Vec<f64> = gammas
            .iter()
            .flat_map(|&g| sinusoidal_embed(g * GAMMA_EMBED_SCALE, e))
            .collect();
        let s = tape.constant(Tensor::new(&[n, e], emb)?);

        let mut trace = ForwardTrace::default();
        let input = tape.concat(&[l, ht])?;
        let mut x = self.conv(tape, b, "conv_in", input, 1, 1)?;
        if self.cfg.fag_enabled {
            let f = self.conv(tape, b, "fag0", guidance, 1, 1)?;
            trace.fag_features.push(f);
            x = tape.add(x, f)?;
        }
        let pool: PoolMode = self.cfg.pooling.into();
        for i in 0..self.cfg.depth {
            x = self.res_block(tape, b, &format!("enc{i}"), x, s, &mut dropout)?;
            trace.skips.push(x);
            x = tape.pool2d(x, 2, pool)?;
            if self.cfg.fag_enabled {
                let k = 1 << (i + 1);
                let f = self.conv(tape, b, &format!("fag{}", i + 1), guidance, k, 0)?;
                trace.fag_features.push(f);
                x = tape.add(x, f)?;
            }
        }
        x = self.res_block(tape, b, "mid", x, s, &mut dropout)?;
        for i in (0..self.cfg.depth).rev() {
            let (w, bias) = (self.var(b, &format!("up{i}.w")), self.var(b, &format!("up{i}.b")));
            let up = tape.conv_transpose2d(x, w, Some(bias), 2, 0)?;
            let cat = tape.concat(&[up, trace.skips[i]])?;
            trace.concats.push((i, cat));
            x = self.res_block(tape, b, &format!("dec{i}"), cat, s, &mut dropout)?;
        }
        let a = tape.silu(x);
        let out = self.conv(tape, b, "conv_out", a, 1, 1)?;
        Ok((out, trace))
    }

    /// Inference-mode prediction on plain tensors.
    pub fn predict(&self, l: &Tensor, ht: &Tensor, guidance: &Tensor, gamma: f64) -> Result<Tensor, CoreError> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let (lv, hv, gv) = (tape.constant(l.clone()), tape.constant(ht.clone()), tape.constant(guidance.clone()));
        let n = ht.shape().first().copied().unwrap_or(1);
        let (out, _) = self.forward(&mut tape, &b, lv, hv, gv, &vec![gamma; n], None)?;
        Ok(tape.value(out).clone())
    }

    /// Sidecar path holding the network config next to a checkpoint.
    pub fn config_path(ckpt: &Path) -> PathBuf {
        let mut p = ckpt.as_os_str().to_owned();
        p.push(".toml");
        PathBuf::from(p)
    }

    pub fn save(&self, ckpt: &Path) -> Result<(), CoreError> {
        let f = std::fs::File::create(ckpt)?;
        write_checkpoint(BufWriter::new(f), &self.params)?;
        std::fs::write(Self::config_path(ckpt), self.cfg.to_toml())?;
        Ok(())
    }

    pub fn load(ckpt: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(Self::config_path(ckpt))?;
        let cfg = DenoiserConfig::from_toml(&text)?;
        let f = std::fs::File::open(ckpt)?;
        let stored = read_checkpoint(BufReader::new(f))?;
        let expected = layout(&cfg);
        if stored.len() != expected.len() {
            return Err(CoreError::Data(format!(
                "checkpoint has {} tensors, config expects {}",
                stored.len(),
                expected.len()
            )));
        }
        for ((name, t), (ename, eshape, _)) in stored.iter().zip(&expected) {
            if name != ename || t.shape() != eshape.as_slice() {
                return Err(CoreError::Data(format!(
                    "checkpoint tensor {name} {:?} does not match expected {ename} {eshape:?}",
                    t.shape()
                )));
            }
        }
        let params = stored.into_iter().map(|(n, t)| (n, t.with_requires_grad(true))).collect();
        Ok(Self::from_parts(cfg, params))
    }
}

/// A denoiser paired with the guidance map of the image being enhanced.
pub struct Guided<'a> {
    pub net: &'a Denoiser,
    pub guidance: Tensor,
}

impl EpsilonModel for Guided<'_> {
    fn predict(&self, l: &Tensor, ht: &Tensor, gamma: f64) -> Result<Tensor, CoreError> {
        self.net.predict(l, ht, &self.guidance, gamma)
    }
}
