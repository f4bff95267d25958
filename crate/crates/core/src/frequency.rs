//! Low/high frequency decomposition and the convex band merge.
//!
//! The low band is an ideal disc low-pass computed with a full-size 2-D
//! DFT; the high band is the Sobel gradient magnitude, scaled by
//! `1 / (4√2)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{clamp_unit, ensure_same_dims, reflect, ImageError, RasterImage, CHANNELS};

pub const DEFAULT_CUTOFF: f64 = 0.10;

const SOBEL_SCALE: f64 = 0.176_776_695_296_636_88; // 1 / (4 * sqrt(2))

#[derive(Debug, Error)]
pub enum FrequencyError {
    #[error("cutoff {0} must lie in (0, 1]")]
    InvalidCutoff(f64),
    #[error("merge weights for channel {channel} are not convex: low {low}, high {high}, full {full}")]
    NonConvex {
        channel: usize,
        low: f64,
        high: f64,
        full: f64,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub fn check_cutoff(cutoff: f64) -> Result<(), FrequencyError> {
    if cutoff > 0.0 && cutoff <= 1.0 {
        Ok(())
    } else {
        Err(FrequencyError::InvalidCutoff(cutoff))
    }
}

/// Unnormalised forward 2-D DFT of a row-major real plane.
pub fn dft2(plane: &[f64], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    transform2(&mut buf, w, h, false);
    buf
}

fn transform2(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
}

/// Squared radial frequency of DFT bin `k` of `n`, in units of Nyquist.
fn radial_sq(k: usize, n: usize) -> f64 {
    let f = 2.0 * k.min(n - k) as f64 / n as f64;
    f * f
}

/// Ideal low-pass of one plane, without clamping. Bins whose radial
/// frequency exceeds `cutoff × Nyquist` are zeroed; `cutoff = 1` passes
/// every bin, including the diagonal corners beyond the Nyquist circle.
pub fn lowpass_plane(plane: &[f64], w: usize, h: usize, cutoff: f64) -> Result<Vec<f64>, FrequencyError> {
    check_cutoff(cutoff)?;
    if cutoff >= 1.0 {
        return Ok(plane.to_vec());
    }
    let mut buf = dft2(plane, w, h);
    let limit = cutoff * cutoff;
    let fy: Vec<f64> = (0..h).map(|k| radial_sq(k, h)).collect();
    let fx: Vec<f64> = (0..w).map(|k| radial_sq(k, w)).collect();
    for (y, row) in buf.chunks_exact_mut(w).enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            if fx[x] + fy[y] > limit {
                *v = Complex::new(0.0, 0.0);
            }
        }
    }
    transform2(&mut buf, w, h, true);
    let norm = 1.0 / (w * h) as f64;
    Ok(buf.iter().map(|c| c.re * norm).collect())
}

fn per_channel(img: &RasterImage, f: impl Fn(&[f64]) -> Result<Vec<f64>, FrequencyError>) -> Result<RasterImage, FrequencyError> {
    let (w, h) = img.dims();
    let mut data = vec![0.0; w * h * CHANNELS];
    for c in 0..CHANNELS {
        let plane = img.channel(c);
        let out = f(plane.data())?;
        for (i, v) in out.into_iter().enumerate() {
            data[i * CHANNELS + c] = clamp_unit(v);
        }
    }
    Ok(RasterImage::from_raw_unchecked(w, h, data))
}

pub fn lowpass_fft(img: &RasterImage, cutoff: f64) -> Result<RasterImage, FrequencyError> {
    let (w, h) = img.dims();
    per_channel(img, |p| lowpass_plane(p, w, h, cutoff))
}

/// Scaled Sobel gradient magnitude of one plane, without clamping.
pub fn sobel_plane(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let xs: Vec<[usize; 3]> = (0..w as isize)
        .map(|x| [reflect(x - 1, w), x as usize, reflect(x + 1, w)])
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        let rows = [reflect(y - 1, h), y as usize, reflect(y + 1, h)].map(|r| &plane[r * w..(r + 1) * w]);
        for [l, c, r] in &xs {
            let gx = (rows[0][*r] - rows[0][*l]) + 2.0 * (rows[1][*r] - rows[1][*l]) + (rows[2][*r] - rows[2][*l]);
            let gy = (rows[2][*l] - rows[0][*l]) + 2.0 * (rows[2][*c] - rows[0][*c]) + (rows[2][*r] - rows[0][*r]);
            out.push((gx * gx + gy * gy).sqrt() * SOBEL_SCALE);
        }
    }
    out
}

pub fn highpass_sobel(img: &RasterImage) -> RasterImage {
    let (w, h) = img.dims();
    per_channel(img, |p| Ok(sobel_plane(p, w, h))).expect("sobel is infallible")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandSet {
    pub low: RasterImage,
    pub high: RasterImage,
    pub full: RasterImage,
}

impl BandSet {
    pub fn new(low: RasterImage, high: RasterImage, full: RasterImage) -> Result<Self, FrequencyError> {
        ensure_same_dims(full.dims(), low.dims())?;
        ensure_same_dims(full.dims(), high.dims())?;
        Ok(Self { low, high, full })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.full.dims()
    }
}

pub fn decompose(img: &RasterImage, cutoff: f64) -> Result<BandSet, FrequencyError> {
    Ok(BandSet {
        low: lowpass_fft(img, cutoff)?,
        high: highpass_sobel(img),
        full: img.clone(),
    })
}

/// Per-channel convex weights for the band merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeWeights {
    pub low: [f64; 3],
    pub high: [f64; 3],
    pub full: [f64; 3],
}

impl MergeWeights {
    pub fn uniform(low: f64, high: f64, full: f64) -> Result<Self, FrequencyError> {
        let w = Self {
            low: [low; 3],
            high: [high; 3],
            full: [full; 3],
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), FrequencyError> {
        for c in 0..CHANNELS {
            let (l, h, f) = (self.low[c], self.high[c], self.full[c]);
            let finite = l.is_finite() && h.is_finite() && f.is_finite();
            if !finite || l < 0.0 || h < 0.0 || f < 0.0 || (l + h + f - 1.0).abs() > 1e-9 {
                return Err(FrequencyError::NonConvex {
                    channel: c,
                    low: l,
                    high: h,
                    full: f,
                });
            }
        }
        Ok(())
    }
}

impl Default for MergeWeights {
    fn default() -> Self {
        Self {
            low: [0.2; 3],
            high: [0.2; 3],
            full: [0.6; 3],
        }
    }
}

/// Merges the three bands of interleaved sample buffers in place of `full`,
/// without clamping.
///
/// Evaluated as `full + wl·(low − full) + wh·(high − full)`, which equals
/// the convex combination and reproduces `full` exactly when all three
/// bands agree or when `wl = wh = 0`.
pub fn merge_samples(low: &[f64], high: &[f64], full: &[f64], w: &MergeWeights) -> Vec<f64> {
    full.iter()
        .enumerate()
        .map(|(i, &f)| {
            let c = i % CHANNELS;
            f + w.low[c] * (low[i] - f) + w.high[c] * (high[i] - f)
        })
        .collect()
}

pub fn merge_bands(bands: &BandSet, weights: &MergeWeights) -> Result<RasterImage, FrequencyError> {
    weights.validate()?;
    let (w, h) = bands.dims();
    let mut out = merge_samples(bands.low.data(), bands.high.data(), bands.full.data(), weights);
    out.iter_mut().for_each(|v| *v = clamp_unit(*v));
    Ok(RasterImage::from_raw_unchecked(w, h, out))
}
