//! Quality and rate metrics: PSNR, SSIM, bits-per-pixel, and the
//! compression factor eta.
//!
//! Conventions frozen here: pixel domain [0,255] with peak 255; identical
//! images report the 99 dB saturation sentinel instead of infinity; SSIM
//! uses the standard 11x11 Gaussian window (sigma 1.5) in valid mode with
//! channels averaged; bpp divides by pixel count H*W (not H*W*C) — that is
//! the denominator that reproduces the reference bpp table on 32x32 images.

use crate::data::Image;
use crate::error::{Error, Result};

/// PSNR saturation sentinel for zero MSE, in dB.
pub const PSNR_SENTINEL_DB: f64 = 99.0;

/// Aggregated evaluation row for one (M, b) operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub bpp: f64,
    pub eta: f64,
    pub samples: usize,
}

fn check_same_dims(x: &Image, y: &Image, context: &'static str) -> Result<()> {
    if !x.same_dims(y) {
        return Err(Error::ShapeMismatch {
            context,
            expected: vec![x.channels(), x.height(), x.width()],
            actual: vec![y.channels(), y.height(), y.width()],
        });
    }
    Ok(())
}

/// Mean squared error over all channels, [0,255] domain.
pub fn mse(x: &Image, y: &Image) -> Result<f64> {
    check_same_dims(x, y, "mse")?;
    let sum: f64 = x
        .pixels()
        .iter()
        .zip(y.pixels())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / x.pixels().len() as f64)
}

/// 10 log10(peak^2 / MSE); 99 dB sentinel when MSE is zero.
pub fn psnr(x: &Image, y: &Image) -> Result<f64> {
    let peak = 255.0f64;
    let mse = mse(x, y)?;
    if mse == 0.0 {
        return Ok(PSNR_SENTINEL_DB);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// The 11-tap Gaussian (sigma 1.5) used by the standard SSIM window,
/// normalized as the 2-D outer product summing to 1.
fn gaussian_window() -> [f64; 11] {
    let sigma = 1.5f64;
    let mut w = [0.0; 11];
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean local SSIM, valid-mode windows, channels averaged. Requires both
/// dimensions >= 11 (the window size).
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    check_same_dims(x, y, "ssim")?;
    let (h, w) = (x.height(), x.width());
    if h < 11 || w < 11 {
        return Err(Error::InvalidConfig(format!(
            "ssim needs images >= 11x11, got {h}x{w}"
        )));
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let win = gaussian_window();

    let mut total = 0.0;
    for ch in 0..x.channels() {
        // Separable Gaussian filtering of the five moment maps, valid mode.
        // Work in f64 from the start.
        let plane = |img: &Image, y_: usize, x_: usize| img.get(ch, y_, x_) as f64;
        let hw = w - 10; // horizontally filtered width
        let filt_h = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            let mut out = vec![0.0; h * hw];
            for yy in 0..h {
                for xx in 0..hw {
                    let mut acc = 0.0;
                    for (k, &wk) in win.iter().enumerate() {
                        acc += wk * f(yy, xx + k);
                    }
                    out[yy * hw + xx] = acc;
                }
            }
            out
        };
        let fx = filt_h(&|yy, xx| plane(x, yy, xx));
        let fy = filt_h(&|yy, xx| plane(y, yy, xx));
        let fxx = filt_h(&|yy, xx| plane(x, yy, xx) * plane(x, yy, xx));
        let fyy = filt_h(&|yy, xx| plane(y, yy, xx) * plane(y, yy, xx));
        let fxy = filt_h(&|yy, xx| plane(x, yy, xx) * plane(y, yy, xx));

        let vh = h - 10;
        let filt_v = |buf: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; vh * hw];
            for yy in 0..vh {
                for xx in 0..hw {
                    let mut acc = 0.0;
                    for (k, &wk) in win.iter().enumerate() {
                        acc += wk * buf[(yy + k) * hw + xx];
                    }
                    out[yy * hw + xx] = acc;
                }
            }
            out
        };
        let mu_x = filt_v(&fx);
        let mu_y = filt_v(&fy);
        let ex2 = filt_v(&fxx);
        let ey2 = filt_v(&fyy);
        let exy = filt_v(&fxy);

        let mut ch_sum = 0.0;
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = ex2[i] - mx * mx;
            let var_y = ey2[i] - my * my;
            let cov = exy[i] - mx * my;
            let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
            ch_sum += s;
        }
        total += ch_sum / mu_x.len() as f64;
    }
    Ok(total / x.channels() as f64)
}

/// bpp = payload bits / (H*W), rounded nowhere — callers round for display.
pub fn bits_per_pixel(payload_bits: u64, height: usize, width: usize) -> Result<f64> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidConfig("zero-size image in rate()".into()));
    }
    Ok(payload_bits as f64 / (height * width) as f64)
}

/// bpp rounded to 4 decimal places — the table display convention; the
/// companion eta is computed from this rounded value.
pub fn bpp_4dp(payload_bits: u64, height: usize, width: usize) -> Result<f64> {
    Ok((bits_per_pixel(payload_bits, height, width)? * 1e4).round() / 1e4)
}

/// Compression factor eta = original bpp / compressed bpp, using the
/// 4-decimal-place bpp, rounded to the nearest integer as displayed in the
/// rate table.
pub fn eta(original_bpp: f64, compressed_bpp_4dp: f64) -> Result<f64> {
    if compressed_bpp_4dp <= 0.0 {
        return Err(Error::InvalidConfig("eta needs positive bpp".into()));
    }
    Ok((original_bpp / compressed_bpp_4dp).round())
}

/// (bpp, eta) for a payload, the rate table arithmetic in one call.
pub fn rate(
    payload_bits: u64,
    height: usize,
    width: usize,
    original_bpp: f64,
) -> Result<(f64, f64)> {
    let bpp = bpp_4dp(payload_bits, height, width)?;
    Ok((bpp, eta(original_bpp, bpp)?))
}
