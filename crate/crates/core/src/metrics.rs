//! Full-reference image quality: PSNR, SSIM and FSIM on `[0, 1]` gray images.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::imaging::GrayImage;
use crate::CoreError;

/// Value reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

const FSIM_T1: f64 = 0.85;
/// 160 on the 0..255 scale.
const FSIM_T2: f64 = 160.0 / (255.0 * 255.0);

fn same_extent(a: &GrayImage, b: &GrayImage) -> Result<(), CoreError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(CoreError::Contract(format!(
            "metric inputs differ in extent: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.pixels().is_empty() {
        return Err(CoreError::Contract("empty image".into()));
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, CoreError> {
    same_extent(a, b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.pixels().len() as f64)
}

/// `10·log10(1/MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64, CoreError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gy * gx);
        }
    }
    w
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, CoreError> {
    same_extent(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(CoreError::Contract(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let win = gaussian_window();
    let (pa, pb) = (a.pixels(), b.pixels());
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let k = win[dy * SSIM_WINDOW + dx];
                    let i = (y0 + dy) * w + x0 + dx;
                    let (va, vb) = (pa[i], pb[i]);
                    ma += k * va;
                    mb += k * vb;
                    saa += k * (va * va);
                    sbb += k * (vb * vb);
                    sab += k * (va * vb);
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * (ma * mb) + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Row-major 2-D FFT of arbitrary extent; the inverse is normalized.
struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for r in data.chunks_mut(self.cols) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for x in 0..self.cols {
            for (y, c) in column.iter_mut().enumerate() {
                *c = data[y * self.cols + x];
            }
            col.process(&mut column);
            for (y, c) in column.iter().enumerate() {
                data[y * self.cols + x] = *c;
            }
        }
        if inverse {
            let s = 1.0 / (self.rows * self.cols) as f64;
            data.iter_mut().for_each(|c| *c *= s);
        }
    }
}

/// Frequency of unshifted bin `k` on the normalized `[-0.5, 0.5)` grid.
fn grid_freq(k: usize, n: usize) -> f64 {
    let denom = if n % 2 == 0 { n } else { n.saturating_sub(1).max(1) } as f64;
    let signed = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    signed / denom
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency from a bank of log-Gabor filters
/// (4 scales × 4 orientations, shortest wavelength 6, octave spacing).
pub fn phase_congruency(img: &GrayImage) -> Vec<f64> {
    const SCALES: usize = 4;
    const ORIENTS: usize = 4;
    const MIN_WAVELENGTH: f64 = 6.0;
    const MULT: f64 = 2.0;
    const SIGMA_ON_F: f64 = 0.55;
    const D_THETA_ON_SIGMA: f64 = 1.2;
    const NOISE_K: f64 = 2.0;
    const EPSILON: f64 = 1e-4;

    let (rows, cols) = (img.height(), img.width());
    let n = rows * cols;
    let fft = Fft2::new(rows, cols);
    let mut image_fft: Vec<Complex64> = img.pixels().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.run(&mut image_fft, false);

    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for v in 0..rows {
        let fy = grid_freq(v, rows);
        for u in 0..cols {
            let fx = grid_freq(u, cols);
            let i = v * cols + u;
            let r = (fx * fx + fy * fy).sqrt();
            lowpass[i] = 1.0 / (1.0 + (r / 0.45).powi(30));
            radius[i] = if i == 0 { 1.0 } else { r };
            let theta = (-fy).atan2(fx);
            sin_t[i] = theta.sin();
            cos_t[i] = theta.cos();
        }
    }
    let log_gabor: Vec<Vec<f64>> = (0..SCALES)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / denom).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();
    let theta_sigma = PI / ORIENTS as f64 / D_THETA_ON_SIGMA;

    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];
    for o in 0..ORIENTS {
        let angle = o as f64 * PI / ORIENTS as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut responses = Vec::with_capacity(SCALES);
        let mut spatial_filters = Vec::with_capacity(SCALES);
        let mut em_n = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            let mut spatial: Vec<Complex64> = filter.iter().map(|&f| Complex64::new(f, 0.0)).collect();
            fft.run(&mut spatial, true);
            let root_n = (n as f64).sqrt();
            spatial_filters.push(spatial.iter().map(|c| c.re * root_n).collect::<Vec<f64>>());

            let mut eo: Vec<Complex64> = image_fft.iter().zip(&filter).map(|(c, f)| c * f).collect();
            fft.run(&mut eo, true);
            for i in 0..n {
                sum_an[i] += eo[i].norm();
                sum_e[i] += eo[i].re;
                sum_o[i] += eo[i].im;
            }
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }
            responses.push(eo);
        }

        let mut energy = vec![0.0; n];
        for i in 0..n {
            let x_energy = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + EPSILON;
            let (mean_e, mean_o) = (sum_e[i] / x_energy, sum_o[i] / x_energy);
            for eo in &responses {
                let (e, od) = (eo[i].re, eo[i].im);
                energy[i] += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
            }
        }

        // Noise threshold from the smallest-scale response statistics.
        let median_e2n = median(responses[0].iter().map(|c| c.norm_sqr()).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = if em_n > 0.0 { mean_e2n / em_n } else { 0.0 };
        let mut sum_an2 = 0.0;
        let mut sum_aiaj = 0.0;
        for i in 0..n {
            for si in 0..SCALES {
                let a = spatial_filters[si][i];
                sum_an2 += a * a;
                for sj in si + 1..SCALES {
                    sum_aiaj += a * spatial_filters[sj][i];
                }
            }
        }
        let est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (est_noise_energy2 / 2.0).max(0.0).sqrt();
        let est_noise_energy = tau * (PI / 2.0).sqrt();
        let est_noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (est_noise_energy + NOISE_K * est_noise_sigma) / 1.7;

        for i in 0..n {
            energy_all[i] += (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }
    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
        .collect()
}

/// Scharr gradient magnitude with zero padding.
fn gradient_magnitude(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.get(x as usize, y as usize)
        }
    };
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let gx = (3.0 * (at(x - 1, y - 1) - at(x + 1, y - 1))
                + 10.0 * (at(x - 1, y) - at(x + 1, y))
                + 3.0 * (at(x - 1, y + 1) - at(x + 1, y + 1)))
                / 16.0;
            let gy = (3.0 * (at(x - 1, y - 1) - at(x - 1, y + 1))
                + 10.0 * (at(x, y - 1) - at(x, y + 1))
                + 3.0 * (at(x + 1, y - 1) - at(x + 1, y + 1)))
                / 16.0;
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Box-average and subsample by `factor`, as done for large inputs.
fn downsample(img: &GrayImage, factor: usize) -> GrayImage {
    if factor <= 1 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let lo = factor / 2 + 1 - factor;
    let hi = factor / 2;
    let ow = w.div_ceil(factor);
    let oh = h.div_ceil(factor);
    let norm = (factor * factor) as f64;
    GrayImage::from_fn(ow, oh, |ox, oy| {
        let (cx, cy) = ((ox * factor) as isize, (oy * factor) as isize);
        let mut acc = 0.0;
        for dy in lo as isize..=hi as isize {
            for dx in lo as isize..=hi as isize {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    acc += img.get(x as usize, y as usize);
                }
            }
        }
        acc / norm
    })
}

/// Feature similarity index.
pub fn fsim(a: &GrayImage, b: &GrayImage) -> Result<f64, CoreError> {
    same_extent(a, b)?;
    let factor = ((a.width().min(a.height()) as f64 / 256.0).round() as usize).max(1);
    let (a, b) = (downsample(a, factor), downsample(b, factor));
    let (pc1, pc2) = (phase_congruency(&a), phase_congruency(&b));
    let (g1, g2) = (gradient_magnitude(&a), gradient_magnitude(&b));
    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    for i in 0..pc1.len() {
        let s_pc = (2.0 * (pc1[i] * pc2[i]) + FSIM_T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + FSIM_T1);
        let s_g = (2.0 * (g1[i] * g2[i]) + FSIM_T2) / (g1[i] * g1[i] + g2[i] * g2[i] + FSIM_T2);
        let pcm = pc1[i].max(pc2[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
        plain += s_pc * s_g;
    }
    // Featureless images carry no phase-congruency weight; fall back to the
    // unweighted mean so the index stays defined.
    if den > 0.0 {
        Ok(num / den)
    } else {
        Ok(plain / pc1.len() as f64)
    }
}

/// One row of a quality table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityScores {
    pub psnr: f64,
    pub ssim: f64,
    pub fsim: f64,
}

pub fn score(a: &GrayImage, b: &GrayImage) -> Result<QualityScores, CoreError> {
    Ok(QualityScores {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
        fsim: fsim(a, b)?,
    })
}

impl QualityScores {
    pub fn mean(rows: &[QualityScores]) -> QualityScores {
        let n = rows.len().max(1) as f64;
        QualityScores {
            psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
            fsim: rows.iter().map(|r| r.fsim).sum::<f64>() / n,
        }
    }
}

pub const CSV_HEADER: &str = "psnr,ssim,fsim,lpips";

/// CSV row in table column order; LPIPS is not computed.
pub fn csv_row(s: &QualityScores) -> String {
    format!("{:.6},{:.6},{:.6},n/a", s.psnr, s.ssim, s.fsim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let v = 0.5 + 0.3 * ((x as f64) * 0.7).sin() * ((y as f64) * 0.4).cos() + 0.1 * ((x * y) as f64 * 0.05).sin();
            v.clamp(0.0, 1.0)
        })
    }

    #[test]
    fn psnr_cases() {
        let a = GrayImage::filled(4, 4, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let z = GrayImage::filled(4, 4, 0.0);
        let o = GrayImage::filled(4, 4, 1.0);
        assert_eq!(psnr(&z, &o).unwrap(), 0.0);
        let b = GrayImage::filled(4, 4, 0.4);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &GrayImage::filled(3, 4, 0.0)).is_err());
    }

    #[test]
    fn ssim_identity_and_small_inputs() {
        let t = texture(24, 20);
        assert_eq!(ssim(&t, &t).unwrap(), 1.0);
        assert!(ssim(&GrayImage::filled(8, 8, 0.0), &GrayImage::filled(8, 8, 0.0)).is_err());
    }

    #[test]
    fn ssim_constant_pair_closed_form() {
        let c = 0.6;
        let a = GrayImage::filled(16, 16, c);
        let b = GrayImage::filled(16, 16, 0.5 * c);
        let expect = (2.0 * c * 0.5 * c + SSIM_C1) / (c * c + 0.25 * c * c + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_inverted_binary_is_negative() {
        let a = GrayImage::from_fn(20, 20, |x, y| if (x * 7 + y * 13) % 5 < 2 { 1.0 } else { 0.0 });
        let b = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &b).unwrap() < 0.0);
    }

    #[test]
    fn fsim_identity_and_symmetry() {
        let t = texture(32, 24);
        assert_eq!(fsim(&t, &t).unwrap(), 1.0);
        let u = texture(32, 24).map(|v| (v * 0.8 + 0.05).min(1.0));
        let ab = fsim(&t, &u).unwrap();
        let ba = fsim(&u, &t).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 1.0 && ab > 0.0);
    }

    #[test]
    fn fsim_constant_images() {
        let a = GrayImage::filled(16, 16, 0.5);
        assert_eq!(fsim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn grid_frequency_layout() {
        assert_eq!(grid_freq(0, 8), 0.0);
        assert_eq!(grid_freq(4, 8), -0.5);
        assert_eq!(grid_freq(3, 7), 0.5);
        assert_eq!(grid_freq(4, 7), -3.0 / 6.0);
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = GrayImage::filled(8, 8, 0.25);
        let d = downsample(&img, 2);
        assert_eq!((d.width(), d.height()), (4, 4));
        // interior blocks are fully covered
        assert_eq!(d.get(1, 1), 0.25);
    }
}
