//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends a node whose inputs already exist, so index order is a
//! topological order and the backward sweep is a single reverse pass.

use crate::kernels::{self, ConvGeometry};
use crate::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// `x [N,C,...] + b [C]`
    AddChannel { x: Var, bias: Var },
    /// `x [N,C,...] + e [N,C]`
    AddSampleChannel { x: Var, e: Var },
    Silu(Var),
    Relu(Var),
    Concat { inputs: Vec<Var> },
    Sum(Var),
    Mean(Var),
    Conv2d { input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry },
    ConvTranspose2d { input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry },
    Pool { input: Var, window: usize, mode: PoolMode, argmax: Vec<usize> },
    Linear { x: Var, w: Var, b: Option<Var> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::AddScalar(a) | Op::Silu(a) | Op::Relu(a) | Op::Sum(a) | Op::Mean(a) => vec![*a],
            Op::AddChannel { x, bias } => vec![*x, *bias],
            Op::AddSampleChannel { x, e } => vec![*x, *e],
            Op::Concat { inputs } => inputs.clone(),
            Op::Conv2d { input, kernel, bias, .. } | Op::ConvTranspose2d { input, kernel, bias, .. } => {
                let mut v = vec![*input, *kernel];
                v.extend(bias);
                v
            }
            Op::Pool { input, .. } => vec![*input],
            Op::Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(TensorError::Shape(msg))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it participates in gradients iff `t.requires_grad`.
    pub fn leaf(&mut self, mut t: Tensor) -> Var {
        t.grad = None;
        let needs_grad = t.requires_grad;
        self.push(t, Op::Leaf, needs_grad)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient stored on a leaf by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    /// Input handles of a node, in the order the op consumed them.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn derived(&mut self, shape: &[usize], data: Vec<f64>, op: Op) -> Var {
        let needs_grad = self.needs(&op.inputs());
        let t = Tensor::new(shape, data).expect("op produced consistent shape");
        self.push(t, op, needs_grad)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).zip_with(self.value(b), |x, y| x + y)?.into_data();
        let shape = self.shape(a).to_vec();
        Ok(self.derived(&shape, data, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = self.value(a).zip_with(self.value(b), |x, y| x - y)?.into_data();
        let shape = self.shape(a).to_vec();
        Ok(self.derived(&shape, data, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).zip_with(self.value(b), |x, y| x * y)?.into_data();
        let shape = self.shape(a).to_vec();
        Ok(self.derived(&shape, data, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        let shape = t.shape().to_vec();
        self.derived(&shape, t.into_data(), Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x + s);
        let shape = t.shape().to_vec();
        self.derived(&shape, t.into_data(), Op::AddScalar(a))
    }

    /// Adds a per-channel vector `[C]` to `x [N,C,...]`.
    pub fn add_channel(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || self.shape(bias) != [xs[1]] {
            return shape_err(format!("add_channel: {xs:?} with bias {:?}", self.shape(bias)));
        }
        let plane: usize = xs[2..].iter().product();
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(plane.max(1)).enumerate() {
            let bv = b[i % xs[1]];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
        Ok(self.derived(&xs, data, Op::AddChannel { x, bias }))
    }

    /// Adds a per-sample, per-channel matrix `[N,C]` to `x [N,C,...]`.
    pub fn add_sample_channel(&mut self, x: Var, e: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || self.shape(e) != [xs[0], xs[1]] {
            return shape_err(format!("add_sample_channel: {xs:?} with {:?}", self.shape(e)));
        }
        let plane: usize = xs[2..].iter().product();
        let ev = self.value(e).data();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(plane.max(1)).enumerate() {
            let add = ev[i];
            chunk.iter_mut().for_each(|v| *v += add);
        }
        Ok(self.derived(&xs, data, Op::AddSampleChannel { x, e }))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * sigmoid(x));
        let shape = t.shape().to_vec();
        self.derived(&shape, t.into_data(), Op::Silu(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(0.0));
        let shape = t.shape().to_vec();
        self.derived(&shape, t.into_data(), Op::Relu(a))
    }

    /// Concatenates along axis 1; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(TensorError::Contract("concat of zero tensors".into()));
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() < 2 {
            return shape_err(format!("concat needs rank >= 2, got {s0:?}"));
        }
        let mut channels = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != s0.len() || s[0] != s0[0] || s[2..] != s0[2..] {
                return shape_err(format!("concat: {s0:?} vs {s:?}"));
            }
            channels += s[1];
        }
        let plane: usize = s0[2..].iter().product();
        let batch = s0[0];
        let mut data = Vec::with_capacity(batch * channels * plane);
        for n in 0..batch {
            for &v in inputs {
                let c = self.shape(v)[1];
                let src = self.value(v).data();
                data.extend_from_slice(&src[n * c * plane..(n + 1) * c * plane]);
            }
        }
        let mut shape = s0;
        shape[1] = channels;
        Ok(self.derived(&shape, data, Op::Concat { inputs: inputs.to_vec() }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.derived(&[], vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let s = self.value(a).mean();
        self.derived(&[], vec![s], Op::Mean(a))
    }

    /// Mean squared difference, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    fn conv_operands(&self, input: Var, kernel: Var) -> Result<([usize; 4], [usize; 4])> {
        let is = self.shape(input);
        let ks = self.shape(kernel);
        if is.len() != 4 || ks.len() != 4 {
            return shape_err(format!("conv expects rank-4 input and kernel, got {is:?} and {ks:?}"));
        }
        Ok(([is[0], is[1], is[2], is[3]], [ks[0], ks[1], ks[2], ks[3]]))
    }

    /// `input [N,C,H,W] ⋆ kernel [F,C,kh,kw] + bias [F]` with zero padding.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (is, ks) = self.conv_operands(input, kernel)?;
        if ks[1] != is[1] {
            return shape_err(format!("conv2d: kernel {ks:?} vs input {is:?}"));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ks[0]] {
                return shape_err(format!("conv2d: bias {:?} for {} filters", self.shape(b), ks[0]));
            }
        }
        let geom = ConvGeometry::forward(is[1], is[2], is[3], ks[0], (ks[2], ks[3]), stride, padding)?;
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            is[0],
            &geom,
        );
        let shape = [is[0], ks[0], geom.out_h, geom.out_w];
        Ok(self.derived(&shape, out, Op::Conv2d { input, kernel, bias, geom }))
    }

    /// Transposed convolution with `kernel [F,C,kh,kw]` mapping `F` input
    /// channels to `C` outputs; the adjoint of [`Tape::conv2d`] in its input.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (is, ks) = self.conv_operands(input, kernel)?;
        if ks[0] != is[1] {
            return shape_err(format!("conv_transpose2d: kernel {ks:?} vs input {is:?}"));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ks[1]] {
                return shape_err(format!("conv_transpose2d: bias {:?} for {} outputs", self.shape(b), ks[1]));
            }
        }
        let geom = ConvGeometry::transposed(is[1], is[2], is[3], ks[1], (ks[2], ks[3]), stride, padding)?;
        let mut out = kernels::conv2d_input_grad(self.value(input).data(), self.value(kernel).data(), is[0], &geom);
        if let Some(b) = bias {
            let plane = geom.height * geom.width;
            let bv = self.value(b).data();
            for (i, chunk) in out.chunks_mut(plane).enumerate() {
                let add = bv[i % geom.channels];
                chunk.iter_mut().for_each(|v| *v += add);
            }
        }
        let shape = [is[0], ks[1], geom.height, geom.width];
        Ok(self.derived(&shape, out, Op::ConvTranspose2d { input, kernel, bias, geom }))
    }

    /// Non-overlapping `window×window` pooling over `[N,C,H,W]`.
    pub fn pool2d(&mut self, input: Var, window: usize, mode: PoolMode) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 4 {
            return shape_err(format!("pool2d expects rank 4, got {s:?}"));
        }
        if window == 0 || s[2] % window != 0 || s[3] % window != 0 {
            return shape_err(format!("pool2d window {window} does not divide {}x{}", s[2], s[3]));
        }
        let (h, w) = (s[2], s[3]);
        let (oh, ow) = (h / window, w / window);
        let src = self.value(input).data();
        let planes = s[0] * s[1];
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::new();
        let inv = 1.0 / (window * window) as f64;
        for p in 0..planes {
            let plane = &src[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0;
                    let mut acc = 0.0;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = (oy * window + dy) * w + ox * window + dx;
                            let v = plane[idx];
                            acc += v;
                            // strict comparison keeps the first maximum in row-major order
                            if v > best {
                                best = v;
                                best_at = p * h * w + idx;
                            }
                        }
                    }
                    match mode {
                        PoolMode::Max => {
                            out.push(best);
                            argmax.push(best_at);
                        }
                        PoolMode::Mean => out.push(acc * inv),
                    }
                }
            }
        }
        let shape = [s[0], s[1], oh, ow];
        Ok(self.derived(&shape, out, Op::Pool { input, window, mode, argmax }))
    }

    /// Row-wise affine map `x [N,D] · w [D,E] + b [E]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return shape_err(format!("linear: input {xs:?} with weight {ws:?}"));
        }
        let (n, d, e) = (xs[0], xs[1], ws[1]);
        let mut out = vec![0.0; n * e];
        if let Some(b) = b {
            if self.shape(b) != [e] {
                return shape_err(format!("linear: bias {:?} for {e} outputs", self.shape(b)));
            }
            let bv = self.value(b).data();
            out.chunks_mut(e).for_each(|row| row.copy_from_slice(bv));
        }
        kernels::gemm(n, d, e, self.value(x).data(), (d, 1), self.value(w).data(), (e, 1), 1.0, &mut out);
        Ok(self.derived(&[n, e], out, Op::Linear { x, w, b }))
    }

    /// Reverse sweep from a scalar `output`.
    ///
    /// Leaves created with `requires_grad` receive their gradient in
    /// [`Tensor::grad`]; the full set is also returned.
    pub fn backward(&mut self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(&grads) {
            if matches!(node.op, Op::Leaf) && node.value.requires_grad {
                node.value.grad = Some(g.clone().unwrap_or_else(|| vec![0.0; node.value.len()]));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        // Only allocate and accumulate for inputs that lead to a gradient leaf.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(bv) {
                        *d += g * y;
                    }
                });
                acc(*b, &mut |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(av) {
                        *d += g * x;
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g * s)),
            Op::AddScalar(a) => acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g)),
            Op::AddChannel { x, bias } => {
                acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                let xs = self.nodes[x.0].value.shape();
                let c = xs[1];
                let plane: usize = xs[2..].iter().product::<usize>().max(1);
                acc(*bias, &mut |d| {
                    for (k, chunk) in g.chunks(plane).enumerate() {
                        d[k % c] += chunk.iter().sum::<f64>();
                    }
                });
            }
            Op::AddSampleChannel { x, e } => {
                acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                let xs = self.nodes[x.0].value.shape();
                let plane: usize = xs[2..].iter().product::<usize>().max(1);
                acc(*e, &mut |d| {
                    for (k, chunk) in g.chunks(plane).enumerate() {
                        d[k] += chunk.iter().sum::<f64>();
                    }
                });
            }
            Op::Silu(a) => {
                let av = val(*a);
                acc(*a, &mut |d| {
                    for ((d, g), &x) in d.iter_mut().zip(g).zip(av) {
                        let s = sigmoid(x);
                        *d += g * s * (1.0 + x * (1.0 - s));
                    }
                });
            }
            Op::Relu(a) => {
                let av = val(*a);
                acc(*a, &mut |d| {
                    for ((d, g), &x) in d.iter_mut().zip(g).zip(av) {
                        if x > 0.0 {
                            *d += g;
                        }
                    }
                });
            }
            Op::Concat { inputs } => {
                let s = node.value.shape();
                let plane: usize = s[2..].iter().product();
                let total_c = s[1];
                let mut offset = 0;
                for &v in inputs {
                    let c = self.nodes[v.0].value.shape()[1];
                    acc(v, &mut |d| {
                        for n in 0..s[0] {
                            let src = &g[(n * total_c + offset) * plane..(n * total_c + offset + c) * plane];
                            let dst = &mut d[n * c * plane..(n + 1) * c * plane];
                            dst.iter_mut().zip(src).for_each(|(d, g)| *d += g);
                        }
                    });
                    offset += c;
                }
            }
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len().max(1) as f64;
                acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::Conv2d { input, kernel, bias, geom } => {
                let batch = self.nodes[input.0].value.shape()[0];
                acc(*input, &mut |d| {
                    let di = kernels::conv2d_input_grad(g, val(*kernel), batch, geom);
                    d.iter_mut().zip(&di).for_each(|(d, v)| *d += v);
                });
                acc(*kernel, &mut |d| kernels::conv2d_kernel_grad(val(*input), g, batch, geom, d));
                if let Some(b) = bias {
                    acc(*b, &mut |d| kernels::channel_sums(g, batch, geom.filters, geom.out_len(), d));
                }
            }
            Op::ConvTranspose2d { input, kernel, bias, geom } => {
                let batch = self.nodes[input.0].value.shape()[0];
                acc(*input, &mut |d| {
                    let di = kernels::conv2d_forward(g, val(*kernel), None, batch, geom);
                    d.iter_mut().zip(&di).for_each(|(d, v)| *d += v);
                });
                acc(*kernel, &mut |d| kernels::conv2d_kernel_grad(g, val(*input), batch, geom, d));
                if let Some(b) = bias {
                    let plane = geom.height * geom.width;
                    acc(*b, &mut |d| kernels::channel_sums(g, batch, geom.channels, plane, d));
                }
            }
            Op::Pool { input, window, mode, argmax } => {
                let s = self.nodes[input.0].value.shape();
                let (h, w) = (s[2], s[3]);
                let (oh, ow) = (h / window, w / window);
                match mode {
                    PoolMode::Max => acc(*input, &mut |d| {
                        for (&src, gv) in argmax.iter().zip(g) {
                            d[src] += gv;
                        }
                    }),
                    PoolMode::Mean => {
                        let inv = 1.0 / (window * window) as f64;
                        acc(*input, &mut |d| {
                            for p in 0..s[0] * s[1] {
                                for oy in 0..oh {
                                    for ox in 0..ow {
                                        let gv = g[(p * oh + oy) * ow + ox] * inv;
                                        for dy in 0..*window {
                                            let row = p * h * w + (oy * window + dy) * w + ox * window;
                                            d[row..row + window].iter_mut().for_each(|d| *d += gv);
                                        }
                                    }
                                }
                            }
                        })
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.nodes[x.0].value.shape();
                let (n, dd) = (xs[0], xs[1]);
                let e = self.nodes[w.0].value.shape()[1];
                // dX = dY · W^T
                acc(*x, &mut |d| kernels::gemm(n, e, dd, g, (e, 1), val(*w), (1, e), 1.0, d));
                // dW = X^T · dY
                acc(*w, &mut |d| kernels::gemm(dd, n, e, val(*x), (1, dd), g, (e, 1), 1.0, d));
                if let Some(b) = b {
                    acc(*b, &mut |d| {
                        for row in g.chunks(e) {
                            d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                        }
                    });
                }
            }
        }
    }
}
