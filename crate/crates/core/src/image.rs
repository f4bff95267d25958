//! Raster containers shared by every stage of the pipeline.
//!
//! All pixel data is stored row-major in `f64`. Colour images are
//! interleaved RGB; values are normalised to `[0, 1]`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("cannot encode {path}: {reason}")]
    Encode { path: String, reason: String },
    #[error("image dimensions must be non-zero, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("mask value {value} at index {index} is not binary")]
    NonBinary { index: usize, value: u8 },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("fill value {0} is outside [0, 1]")]
    InvalidFill(f64),
}

fn check_dims(width: usize, height: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension { width, height });
    }
    Ok(())
}

/// Samples per pixel of a [`RasterImage`].
pub const CHANNELS: usize = 3;

/// An RGB image with channel values in `[0, 1]`, interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub const CHANNELS: usize = CHANNELS;

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        let expected = width * height * Self::CHANNELS;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from arbitrary values, clamping each into `[0, 1]`.
    /// NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self, ImageError> {
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data)
    }

    /// Builds an image pixel by pixel; values are clamped into `[0, 1]`.
    ///
    /// # Panics
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|&v| clamp_unit(v)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + channel]
    }

    /// Extracts one channel as a gray plane.
    pub fn channel(&self, channel: usize) -> GrayImage {
        assert!(channel < 3);
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(channel).step_by(3).copied().collect(),
        }
    }

    /// Interleaves three planes back into a colour image, clamping to `[0, 1]`.
    pub fn from_channels(planes: [&GrayImage; 3]) -> Result<Self, ImageError> {
        let (w, h) = planes[0].dims();
        for p in &planes[1..] {
            if p.dims() != (w, h) {
                return Err(ImageError::DimensionMismatch {
                    expected: (w, h),
                    actual: p.dims(),
                });
            }
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for i in 0..w * h {
            for p in &planes {
                data.push(clamp_unit(p.data[i]));
            }
        }
        Self::new(w, h, data)
    }

    /// Resamples to `new_w × new_h` with bilinear interpolation at
    /// half-pixel centres.
    pub fn resize(&self, new_w: usize, new_h: usize) -> Result<Self, ImageError> {
        check_dims(new_w, new_h)?;
        let mut out = resize_plane(&self.data, self.width, self.height, 3, new_w, new_h);
        for v in &mut out {
            *v = clamp_unit(*v);
        }
        Ok(Self::from_raw_unchecked(new_w, new_h, out))
    }

    /// Replaces every masked pixel with `fill` on all channels.
    pub fn apply_mask(&self, mask: &DefectMask, fill: f64) -> Result<Self, ImageError> {
        if !(0.0..=1.0).contains(&fill) {
            return Err(ImageError::InvalidFill(fill));
        }
        ensure_same_dims(self.dims(), mask.dims())?;
        let mut data = self.data.clone();
        for (px, &m) in data.chunks_exact_mut(3).zip(mask.data()) {
            if m != 0 {
                px.fill(fill);
            }
        }
        Ok(Self::from_raw_unchecked(self.width, self.height, data))
    }
}

/// A single-channel plane. Values are not range-restricted so that
/// intermediate results (e.g. before clamping) can be carried.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Binary defect map: 1 marks a missing pixel, 0 a pixel to keep.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DefectMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl DefectMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(ImageError::NonBinary { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// # Panics
    ///
    /// Panics if either dimension is zero.
    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// # Panics
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[y * width + x] = f(x, y) as u8;
            }
        }
        m
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|&v| v <= 1));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v != 0)
    }

    /// Nearest-neighbour resampling at half-pixel centres.
    pub fn resize_nearest(&self, new_w: usize, new_h: usize) -> Result<Self, ImageError> {
        check_dims(new_w, new_h)?;
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let mut data = Vec::with_capacity(new_w * new_h);
        for y in 0..new_h {
            let src_y = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            for x in 0..new_w {
                let src_x = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
                data.push(self.data[src_y * self.width + src_x]);
            }
        }
        Ok(Self::from_raw_unchecked(new_w, new_h, data))
    }

    /// Resamples the mask so that a target pixel is defective whenever any
    /// source pixel contributing to it under [`RasterImage::resize`] is
    /// defective (nonzero bilinear weight).
    pub fn resize_support(&self, new_w: usize, new_h: usize) -> Result<Self, ImageError> {
        check_dims(new_w, new_h)?;
        let xs = bilinear_taps(self.width, new_w);
        let ys = bilinear_taps(self.height, new_h);
        let mut data = Vec::with_capacity(new_w * new_h);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let mut hit = false;
                for (yy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                    for (xx, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                        if wy > 0.0 && wx > 0.0 && self.data[yy * self.width + xx] != 0 {
                            hit = true;
                        }
                    }
                }
                data.push(hit as u8);
            }
        }
        Ok(Self::from_raw_unchecked(new_w, new_h, data))
    }
}

pub fn ensure_same_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<(), ImageError> {
    if expected != actual {
        return Err(ImageError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Reflection without edge repeat (`-1 → 1`, `n → n - 2`), periodic with
/// period `2(n - 1)` so any overhang maps inside `0..n`.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Per output coordinate: the two source indices and the weight of the
/// second one, for half-pixel-centred bilinear sampling.
pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling of an interleaved plane with `channels` values per
/// pixel. No clamping is applied, so signed data is supported.
///
/// Interpolation is written as `a + (b - a) * t` so equal neighbours
/// reproduce their value exactly.
pub fn resize_plane(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    new_w: usize,
    new_h: usize,
) -> Vec<f64> {
    assert_eq!(data.len(), width * height * channels);
    let xs = bilinear_taps(width, new_w);
    let ys = bilinear_taps(height, new_h);
    let mut out = Vec::with_capacity(new_w * new_h * channels);
    for &(y0, y1, fy) in &ys {
        let row0 = &data[y0 * width * channels..(y0 + 1) * width * channels];
        let row1 = &data[y1 * width * channels..(y1 + 1) * width * channels];
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let a = row0[x0 * channels + c];
                let b = row0[x1 * channels + c];
                let d = row1[x0 * channels + c];
                let e = row1[x1 * channels + c];
                let top = a + (b - a) * fx;
                let bottom = d + (e - d) * fx;
                out.push(top + (bottom - top) * fy);
            }
        }
    }
    out
}
