//! Full-reference image quality metrics: PSNR, SSIM, MS-SSIM.
//!
//! SSIM follows the original single-scale algorithm: an 11x11 Gaussian
//! window (sigma 1.5), constants K1 = 0.01 / K2 = 0.03 on unit dynamic
//! range, weighted (population) moments, valid-region convolution, per
//! channel and averaged. MS-SSIM uses the standard five scale weights with
//! 2x2 average-pool downsampling; images too small for five scales reduce
//! the scale count (renormalizing the weights) and report the reduction.

use crate::error::{Error, Result};
use crate::img::ImageRgb;

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

/// Standard five-scale MS-SSIM exponents.
const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// PSNR in decibels over unit dynamic range, clamped to a 100 dB sentinel so
/// identical images stay numeric in logs.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Usage(format!(
            "psnr dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut se = 0.0;
    for (pa, pb) in a.data.iter().zip(b.data.iter()) {
        for c in 0..3 {
            let d = pa[c] - pb[c];
            se += d * d;
        }
    }
    let mse = se / (a.data.len() as f64 * 3.0);
    if mse == 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(100.0))
}

/// Single-scale SSIM averaged over RGB channels.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Usage(format!(
            "ssim dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::Usage(format!(
            "ssim needs at least {WINDOW}x{WINDOW} images, got {}x{}",
            a.width, a.height
        )));
    }
    let mut acc = 0.0;
    for c in 0..3 {
        let (mean_ssim, _) = ssim_channel(a, b, c);
        acc += mean_ssim;
    }
    Ok(acc / 3.0)
}

/// Scale count MS-SSIM will use for a given image size.
pub fn ms_ssim_scales(width: usize, height: usize) -> usize {
    let mut dim = width.min(height);
    let mut scales = 0;
    while dim >= WINDOW && scales < 5 {
        scales += 1;
        dim = dim.div_ceil(2);
    }
    scales.max(1)
}

/// Multi-scale SSIM. Returns the score and the number of scales actually
/// used (fewer than five on small images).
pub fn ms_ssim(a: &ImageRgb, b: &ImageRgb) -> Result<(f64, usize)> {
    if !a.same_shape(b) {
        return Err(Error::Usage(format!(
            "ms-ssim dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let scales = ms_ssim_scales(a.width, a.height);
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::Usage(format!(
            "ms-ssim needs at least {WINDOW}x{WINDOW} images, got {}x{}",
            a.width, a.height
        )));
    }
    let weight_sum: f64 = MS_WEIGHTS[..scales].iter().sum();
    let mut score = 1.0;
    let mut cur_a = a.clone();
    let mut cur_b = b.clone();
    for level in 0..scales {
        let mut cs_acc = 0.0;
        let mut ssim_acc = 0.0;
        for c in 0..3 {
            let (mean_ssim, mean_cs) = ssim_channel(&cur_a, &cur_b, c);
            ssim_acc += mean_ssim;
            cs_acc += mean_cs;
        }
        let cs = (cs_acc / 3.0).max(0.0);
        let s = (ssim_acc / 3.0).max(0.0);
        let w = MS_WEIGHTS[level] / weight_sum;
        if level + 1 == scales {
            score *= s.powf(w);
        } else {
            score *= cs.powf(w);
            cur_a = cur_a.downscale(2);
            cur_b = cur_b.downscale(2);
        }
    }
    Ok((score, scales))
}

/// Mean SSIM and mean contrast-structure term of one channel over the valid
/// convolution region.
fn ssim_channel(a: &ImageRgb, b: &ImageRgb, channel: usize) -> (f64, f64) {
    let w = a.width;
    let h = a.height;
    let xa: Vec<f64> = a.data.iter().map(|p| p[channel]).collect();
    let xb: Vec<f64> = b.data.iter().map(|p| p[channel]).collect();

    let kernel = gaussian_kernel();
    let mu_a = filter_valid(&xa, w, h, &kernel);
    let mu_b = filter_valid(&xb, w, h, &kernel);
    let aa: Vec<f64> = xa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = xb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = xa.iter().zip(xb.iter()).map(|(x, y)| x * y).collect();
    let mu_aa = filter_valid(&aa, w, h, &kernel);
    let mu_bb = filter_valid(&bb, w, h, &kernel);
    let mu_ab = filter_valid(&ab, w, h, &kernel);

    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    for i in 0..mu_a.len() {
        let ma = mu_a[i];
        let mb = mu_b[i];
        let va = mu_aa[i] - ma * ma;
        let vb = mu_bb[i] - mb * mb;
        let cov = mu_ab[i] - ma * mb;
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    let n = mu_a.len() as f64;
    (ssim_sum / n, cs_sum / n)
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let r = (WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let x = (i as isize - r) as f64;
        *v = (-0.5 * x * x / (SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode correlation with a symmetric 1D kernel.
fn filter_valid(data: &[f64], width: usize, height: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let out_w = width - WINDOW + 1;
    let out_h = height - WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0; out_w * height];
    for y in 0..height {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * data[y * width + x + k];
            }
            tmp[y * out_w + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + k) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}
