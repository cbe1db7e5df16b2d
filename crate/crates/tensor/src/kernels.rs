//! Raw slice kernels behind the differentiable ops.
//!
//! Convolutions go through im2col/col2im and a dense matrix product, so the
//! forward pass, the input gradient and the transposed convolution all share
//! one index mapping.

use crate::TensorError;

/// Row-major `c = a·b + beta·c` where `a` is `m×k` and `b` is `k×n`.
///
/// Strides are given in elements; a transposed operand is expressed by
/// swapping its row and column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 2-D convolution from a `[C,H,W]` plane stack to `[F,OH,OW]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn forward(
        channels: usize,
        height: usize,
        width: usize,
        filters: usize,
        (kh, kw): (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        if stride == 0 {
            return Err(TensorError::Contract("stride must be at least 1".into()));
        }
        if kh == 0 || kw == 0 || kh > height + 2 * padding || kw > width + 2 * padding {
            return Err(TensorError::Shape(format!(
                "kernel {kh}x{kw} does not fit {height}x{width} with padding {padding}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            filters,
            kh,
            kw,
            stride,
            padding,
            out_h: (height + 2 * padding - kh) / stride + 1,
            out_w: (width + 2 * padding - kw) / stride + 1,
        })
    }

    /// Geometry of the convolution whose input gradient a transposed
    /// convolution computes: `[filters, in_h, in_w]` maps back to
    /// `[channels, (in_h-1)*stride - 2*padding + kh, ...]`.
    pub fn transposed(
        filters: usize,
        in_h: usize,
        in_w: usize,
        channels: usize,
        (kh, kw): (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        if stride == 0 {
            return Err(TensorError::Contract("stride must be at least 1".into()));
        }
        if in_h == 0 || in_w == 0 {
            return Err(TensorError::Shape("empty transposed-conv input".into()));
        }
        let full_h = (in_h - 1) * stride + kh;
        let full_w = (in_w - 1) * stride + kw;
        if full_h <= 2 * padding || full_w <= 2 * padding {
            return Err(TensorError::Shape(format!(
                "padding {padding} consumes the whole transposed-conv output"
            )));
        }
        Ok(Self {
            channels,
            height: full_h - 2 * padding,
            width: full_w - 2 * padding,
            filters,
            kh,
            kw,
            stride,
            padding,
            out_h: in_h,
            out_w: in_w,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Input coordinate for output position `o` and kernel offset `k`.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Unfolds one `[C,H,W]` plane stack into `[C*kh*kw, OH*OW]` columns.
pub(crate) fn im2col(input: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let p = g.out_len();
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = g.source(oy, ky, g.height);
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match (iy, g.source(ox, kx, g.width)) {
                            (Some(iy), Some(ix)) => plane[iy * g.width + ix],
                            _ => 0.0,
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `out`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeometry, out: &mut [f64]) {
    let p = g.out_len();
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ky, g.height) else {
                        continue;
                    };
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kx, g.width) {
                            plane[iy * g.width + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Batched convolution: `input [N,C,H,W]`, `kernel [F,C,kh,kw]` → `[N,F,OH,OW]`.
pub(crate) fn conv2d_forward(
    input: &[f64],
    kernel: &[f64],
    bias: Option<&[f64]>,
    batch: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let (ck, p, f) = (g.patch_len(), g.out_len(), g.filters);
    let mut out = vec![0.0; batch * f * p];
    let mut cols = vec![0.0; ck * p];
    for n in 0..batch {
        im2col(&input[n * g.in_len()..(n + 1) * g.in_len()], g, &mut cols);
        let dst = &mut out[n * f * p..(n + 1) * f * p];
        if let Some(b) = bias {
            for (row, &bv) in dst.chunks_mut(p).zip(b) {
                row.fill(bv);
            }
        }
        gemm(f, ck, p, kernel, (ck, 1), &cols, (p, 1), 1.0, dst);
    }
    out
}

/// Input gradient of [`conv2d_forward`]; also the transposed-convolution forward.
pub(crate) fn conv2d_input_grad(grad_out: &[f64], kernel: &[f64], batch: usize, g: &ConvGeometry) -> Vec<f64> {
    let (ck, p, f) = (g.patch_len(), g.out_len(), g.filters);
    let mut d_input = vec![0.0; batch * g.in_len()];
    let mut cols = vec![0.0; ck * p];
    for n in 0..batch {
        // cols = K^T · dY
        gemm(
            ck,
            f,
            p,
            kernel,
            (1, ck),
            &grad_out[n * f * p..(n + 1) * f * p],
            (p, 1),
            0.0,
            &mut cols,
        );
        col2im(&cols, g, &mut d_input[n * g.in_len()..(n + 1) * g.in_len()]);
    }
    d_input
}

/// Kernel gradient of [`conv2d_forward`], accumulated into `d_kernel [F, C*kh*kw]`.
pub(crate) fn conv2d_kernel_grad(
    input: &[f64],
    grad_out: &[f64],
    batch: usize,
    g: &ConvGeometry,
    d_kernel: &mut [f64],
) {
    let (ck, p, f) = (g.patch_len(), g.out_len(), g.filters);
    let mut cols = vec![0.0; ck * p];
    for n in 0..batch {
        im2col(&input[n * g.in_len()..(n + 1) * g.in_len()], g, &mut cols);
        // dK += dY · cols^T
        gemm(
            f,
            p,
            ck,
            &grad_out[n * f * p..(n + 1) * f * p],
            (p, 1),
            &cols,
            (1, p),
            1.0,
            d_kernel,
        );
    }
}

/// Batched per-filter sum of `[N,F,P]` into `d_bias [F]`.
pub(crate) fn channel_sums(grad: &[f64], batch: usize, channels: usize, plane: usize, d_bias: &mut [f64]) {
    for n in 0..batch {
        for c in 0..channels {
            let start = (n * channels + c) * plane;
            d_bias[c] += grad[start..start + plane].iter().sum::<f64>();
        }
    }
}
