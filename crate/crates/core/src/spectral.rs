//! Radix-2 2-D FFT and the fused attention guidance (FAG) map.
//!
//! The guidance map combines the inverted HSI intensity of the low-light
//! input with its high-frequency content:
//!
//! ```text
//! FAG = clamp( 1 - λ/√3 · (R+G+B)  +  Re IFFT{ H · FFT(gray) },  0, 1 )
//! ```
//!
//! `H` is an ideal high-pass mask; the cutoff is expressed in frequency bins
//! at a 256-pixel reference extent and scaled to the actual image size.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::imaging::{rgb_to_gray, GrayImage, RgbImage};
use crate::CoreError;

/// Extent at which the cutoff radius is specified.
pub const REFERENCE_EXTENT: f64 = 256.0;
pub const DEFAULT_CUTOFF: f64 = 20.0;
/// Makes the intensity term exactly `1 - (R+G+B)/3`.
pub const DEFAULT_LAMBDA: f64 = 0.577_350_269_189_625_8;

/// Complex spectrum, DC at `(0, 0)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.bins[v * self.width + u]
    }
}

/// Per-pixel guidance values in `[0, 1]`.
pub type GuidanceMap = GrayImage;

fn check_pow2(width: usize, height: usize) -> Result<(), CoreError> {
    if !width.is_power_of_two() || !height.is_power_of_two() {
        return Err(CoreError::Contract(format!(
            "FFT extents must be powers of two, got {width}x{height}"
        )));
    }
    Ok(())
}

/// In-place iterative Cooley–Tukey; `inverse` flips the twiddle sign but
/// does not normalize.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // direct twiddles avoid accumulated rotation error
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn fft2d_complex(width: usize, height: usize, data: &mut [Complex64], inverse: bool) {
    for row in data.chunks_mut(width) {
        fft_in_place(row, inverse);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = data[y * width + x];
        }
        fft_in_place(&mut column, inverse);
        for (y, c) in column.iter().enumerate() {
            data[y * width + x] = *c;
        }
    }
    if inverse {
        let scale = 1.0 / (width * height) as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Unnormalized forward transform: a constant image `c` has DC `c·N`.
pub fn fft2d(img: &GrayImage) -> Result<Spectrum, CoreError> {
    let (w, h) = (img.width(), img.height());
    check_pow2(w, h)?;
    let mut bins: Vec<Complex64> = img.pixels().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2d_complex(w, h, &mut bins, false);
    Ok(Spectrum { width: w, height: h, bins })
}

/// Inverse transform including the `1/N` factor.
pub fn ifft2d_complex(s: &Spectrum) -> Result<Vec<Complex64>, CoreError> {
    check_pow2(s.width, s.height)?;
    let mut data = s.bins.clone();
    fft2d_complex(s.width, s.height, &mut data, true);
    Ok(data)
}

/// Real part of the inverse transform.
pub fn ifft2d(s: &Spectrum) -> Result<GrayImage, CoreError> {
    let data = ifft2d_complex(s)?;
    GrayImage::from_pixels(s.width, s.height, data.into_iter().map(|c| c.re).collect())
}

/// Signed frequency index of bin `k` in an `n`-point transform.
fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Ideal high-pass mask: 0 where the centered radial bin distance is at most
/// `cutoff`, 1 elsewhere. DC is always stopped.
pub fn highpass_mask(width: usize, height: usize, cutoff: f64) -> Vec<f64> {
    let mut mask = Vec::with_capacity(width * height);
    for v in 0..height {
        let fv = signed_freq(v, height);
        for u in 0..width {
            let fu = signed_freq(u, width);
            let stop = (u == 0 && v == 0) || (fu * fu + fv * fv).sqrt() <= cutoff;
            mask.push(if stop { 0.0 } else { 1.0 });
        }
    }
    mask
}

/// Cutoff in bins for an image of the given extent.
pub fn scaled_cutoff(cutoff: f64, width: usize, height: usize) -> f64 {
    cutoff * width.min(height) as f64 / REFERENCE_EXTENT
}

/// High-frequency component `Re IFFT{H · FFT(gray)}` with an absolute cutoff.
pub fn highpass(gray: &GrayImage, cutoff_bins: f64) -> Result<GrayImage, CoreError> {
    let mut spec = fft2d(gray)?;
    let mask = highpass_mask(spec.width, spec.height, cutoff_bins);
    spec.bins.iter_mut().zip(&mask).for_each(|(b, m)| *b *= m);
    ifft2d(&spec)
}

/// The two FAG terms before summation and clamping.
#[derive(Clone, Debug, PartialEq)]
pub struct FagTerms {
    pub intensity: GrayImage,
    pub high_freq: GrayImage,
}

pub fn fag_terms(img: &RgbImage, lambda: f64, cutoff: f64) -> Result<FagTerms, CoreError> {
    if !(lambda > 0.0) {
        return Err(CoreError::Contract(format!("lambda must be positive, got {lambda}")));
    }
    let k = lambda / 3f64.sqrt();
    let intensity = img.map(|[r, g, b]| 1.0 - k * (r + g + b));
    let bins = scaled_cutoff(cutoff, img.width(), img.height());
    let high_freq = highpass(&rgb_to_gray(img), bins)?;
    Ok(FagTerms { intensity, high_freq })
}

/// Fused attention guidance map of a low-light RGB image.
pub fn fag(img: &RgbImage, lambda: f64, cutoff: f64) -> Result<GuidanceMap, CoreError> {
    let terms = fag_terms(img, lambda, cutoff)?;
    let pixels = terms
        .intensity
        .pixels()
        .iter()
        .zip(terms.high_freq.pixels())
        .map(|(a, b)| (a + b).clamp(0.0, 1.0))
        .collect();
    GrayImage::from_pixels(img.width(), img.height(), pixels)
}
