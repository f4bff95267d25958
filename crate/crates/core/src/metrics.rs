//! Full-reference quality metrics on `[0, 1]` data.
//!
//! SSIM is single-scale with an 11×11 Gaussian window (σ = 1.5),
//! `C1 = (0.01·peak)²`, `C2 = (0.03·peak)²`, evaluated on every fully
//! contained window of every channel and averaged. Every metric is exactly
//! symmetric in its two arguments.

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::image::{ensure_same_dims, ImageError, RasterImage, CHANNELS};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const PEAK: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("SSIM needs both dimensions >= {SSIM_WINDOW}, got {0}x{1}")]
    TooSmall(usize, usize),
}

pub fn mae(a: &RasterImage, b: &RasterImage) -> Result<f64, MetricsError> {
    ensure_same_dims(a.dims(), b.dims())?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.data().len() as f64)
}

pub fn mse(a: &RasterImage, b: &RasterImage) -> Result<f64, MetricsError> {
    ensure_same_dims(a.dims(), b.dims())?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(peak² / mse)`, or `+∞` when `mse == 0`.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &RasterImage, b: &RasterImage, peak: f64) -> Result<f64, MetricsError> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Separable valid-region filtering of a plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(j, t)| t * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64, MetricsError> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(w, h));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (0.01 * PEAK) * (0.01 * PEAK);
    let c2 = (0.03 * PEAK) * (0.03 * PEAK);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..CHANNELS {
        let pa = a.channel(c).into_data();
        let pb = b.channel(c).into_data();
        let sq = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
        let mu_a = filter_valid(&pa, w, h, &taps);
        let mu_b = filter_valid(&pb, w, h, &taps);
        let e_aa = filter_valid(&sq(&pa, &pa), w, h, &taps);
        let e_bb = filter_valid(&sq(&pb, &pb), w, h, &taps);
        let e_ab = filter_valid(&sq(&pa, &pb), w, h, &taps);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

/// Metrics for one (restored, reference) pair. `mae255` and `mse255` are
/// the same errors on the 0–255 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    #[serde(serialize_with = "ser_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub mae255: f64,
    pub mse255: f64,
    pub n_pixels: usize,
    pub peak: f64,
}

impl MetricsReport {
    pub fn psnr_is_infinite(&self) -> bool {
        self.psnr.is_infinite()
    }
}

/// PSNR formatted for text reports: `inf` for identical images.
pub fn format_psnr(psnr: f64) -> String {
    if psnr.is_infinite() {
        "inf".into()
    } else {
        format!("{psnr}")
    }
}

pub fn compare(restored: &RasterImage, reference: &RasterImage) -> Result<MetricsReport, MetricsError> {
    let mae = mae(restored, reference)?;
    let mse = mse(restored, reference)?;
    Ok(MetricsReport {
        mae,
        mse,
        psnr: psnr_from_mse(mse, PEAK),
        ssim: ssim(restored, reference)?,
        mae255: mae * 255.0,
        mse255: mse * 255.0 * 255.0,
        n_pixels: restored.width() * restored.height(),
        peak: PEAK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(v: [f64; 3]) -> RasterImage {
        RasterImage::new(1, 1, v.to_vec()).unwrap()
    }

    #[test]
    fn one_pixel_arithmetic() {
        let a = px([0.2, 0.4, 0.6]);
        let b = px([0.5, 0.4, 0.0]);
        assert!((mae(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        assert!((mse(&a, &b).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn psnr_closed_form_and_sentinel() {
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        let a = px([0.1, 0.2, 0.3]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_needs_a_full_window() {
        let a = RasterImage::filled(10, 20, [0.5; 3]).unwrap();
        assert!(matches!(ssim(&a, &a), Err(MetricsError::TooSmall(10, 20))));
    }

    #[test]
    fn ssim_of_constants_is_the_luminance_term() {
        let (x, y) = (0.3, 0.7);
        let a = RasterImage::filled(16, 12, [x; 3]).unwrap();
        let b = RasterImage::filled(16, 12, [y; 3]).unwrap();
        let c1 = 1e-4;
        let expect = (2.0 * x * y + c1) / (x * x + y * y + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn report_serialises_infinite_psnr() {
        let a = RasterImage::filled(12, 12, [0.5; 3]).unwrap();
        let r = compare(&a, &a).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"psnr\":\"inf\""), "{json}");
        assert_eq!(r.ssim, 1.0);
        assert_eq!(r.n_pixels, 144);
    }
}
