//! Perspective averaging, scale fusion and paste-back.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{clamp_unit, ensure_same_dims, DefectMask, ImageError, RasterImage};
use crate::tiling::PERSPECTIVES;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("perspective set has {0} members, expected 16")]
    MissingPerspective(usize),
    #[error("scale weights {0:?} must be non-negative and sum to 1")]
    BadWeights([f64; 3]),
    #[error("cannot parse scale weights '{0}'")]
    Parse(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Running perspective mean. Perspective 0 is the pivot; later members
/// contribute their difference from it, accumulated in the order added.
/// Identical inputs therefore average to themselves exactly.
#[derive(Debug, Clone)]
pub struct PerspectiveAccumulator {
    dims: (usize, usize),
    pivot: Option<Vec<f64>>,
    diff: Vec<f64>,
    count: usize,
}

impl PerspectiveAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            dims: (width, height),
            pivot: None,
            diff: vec![0.0; width * height * 3],
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one reconstruction as interleaved samples.
    pub fn add_samples(&mut self, samples: &[f64]) {
        assert_eq!(samples.len(), self.diff.len());
        match &self.pivot {
            None => self.pivot = Some(samples.to_vec()),
            Some(p) => {
                for ((d, &s), &q) in self.diff.iter_mut().zip(samples).zip(p) {
                    *d += s - q;
                }
            }
        }
        self.count += 1;
    }

    pub fn add(&mut self, img: &RasterImage) -> Result<(), FusionError> {
        ensure_same_dims(self.dims, img.dims())?;
        self.add_samples(img.data());
        Ok(())
    }

    /// Mean of the samples added so far, unclamped.
    pub fn mean_samples(&self) -> Vec<f64> {
        let Some(p) = &self.pivot else {
            return self.diff.clone();
        };
        let n = self.count as f64;
        p.iter().zip(&self.diff).map(|(&q, &d)| q + d / n).collect()
    }

    pub fn finish(&self) -> Result<RasterImage, FusionError> {
        if self.count != PERSPECTIVES {
            return Err(FusionError::MissingPerspective(self.count));
        }
        let mut data = self.mean_samples();
        data.iter_mut().for_each(|v| *v = clamp_unit(*v));
        Ok(RasterImage::from_raw_unchecked(self.dims.0, self.dims.1, data))
    }
}

/// The 16 reconstructions of one image at one scale, by perspective.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveSet {
    reconstructions: Vec<RasterImage>,
}

impl PerspectiveSet {
    pub fn new(reconstructions: Vec<RasterImage>) -> Result<Self, FusionError> {
        if reconstructions.len() != PERSPECTIVES {
            return Err(FusionError::MissingPerspective(reconstructions.len()));
        }
        let dims = reconstructions[0].dims();
        for r in &reconstructions[1..] {
            ensure_same_dims(dims, r.dims())?;
        }
        Ok(Self { reconstructions })
    }

    pub fn get(&self, perspective: usize) -> &RasterImage {
        &self.reconstructions[perspective]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RasterImage> {
        self.reconstructions.iter()
    }
}

pub fn average_perspectives(set: &PerspectiveSet) -> Result<RasterImage, FusionError> {
    let (w, h) = set.get(0).dims();
    let mut acc = PerspectiveAccumulator::new(w, h);
    for r in set.iter() {
        acc.add(r)?;
    }
    acc.finish()
}

/// Convex weights for the scales 1, 4/5 and 3/5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleWeights(pub [f64; 3]);

impl ScaleWeights {
    /// 0.8 / 0.1 / 0.1.
    pub const DEFAULT: ScaleWeights = ScaleWeights([0.8, 0.1, 0.1]);
    /// 0.7 / 0.2 / 0.1.
    pub const ALTERNATE: ScaleWeights = ScaleWeights([0.7, 0.2, 0.1]);

    pub fn new(w: [f64; 3]) -> Result<Self, FusionError> {
        let s = ScaleWeights(w);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let w = self.0;
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(FusionError::BadWeights(w));
        }
        Ok(())
    }

    /// Preset name when the weights match one, else `"custom"`.
    pub fn preset_name(&self) -> &'static str {
        if *self == Self::DEFAULT {
            "default"
        } else if *self == Self::ALTERNATE {
            "alternate"
        } else {
            "custom"
        }
    }
}

impl Default for ScaleWeights {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for ScaleWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Accepts `default`, `alternate`, or three comma-separated numbers.
impl FromStr for ScaleWeights {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "default" => return Ok(Self::DEFAULT),
            "alternate" => return Ok(Self::ALTERNATE),
            _ => {}
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| FusionError::Parse(s.to_string()))?;
        let arr: [f64; 3] = parts.try_into().map_err(|_| FusionError::Parse(s.to_string()))?;
        Self::new(arr)
    }
}

/// Reconstructions at scales 1, 4/5 and 3/5, each already resized back to
/// the original dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleStack {
    pub at_scale: [RasterImage; 3],
    pub weights: ScaleWeights,
}

/// `I₁ + w₂(I₀.₈ − I₁) + w₃(I₀.₆ − I₁)`, the weighted sum rewritten so that
/// equal inputs, or `w₂ = w₃ = 0`, reproduce `I₁` exactly. Unclamped.
pub fn fuse_samples(at_scale: [&[f64]; 3], weights: &ScaleWeights) -> Vec<f64> {
    let [_, w2, w3] = weights.0;
    at_scale[0]
        .iter()
        .zip(at_scale[1])
        .zip(at_scale[2])
        .map(|((&a, &b), &c)| a + w2 * (b - a) + w3 * (c - a))
        .collect()
}

pub fn fuse_scales(stack: &ScaleStack) -> Result<RasterImage, FusionError> {
    stack.weights.validate()?;
    let dims = stack.at_scale[0].dims();
    for img in &stack.at_scale[1..] {
        ensure_same_dims(dims, img.dims())?;
    }
    let mut data = fuse_samples(stack.at_scale.each_ref().map(|i| i.data()), &stack.weights);
    data.iter_mut().for_each(|v| *v = clamp_unit(*v));
    Ok(RasterImage::from_raw_unchecked(dims.0, dims.1, data))
}

/// `restored` where the mask is set, `original_damaged` elsewhere.
pub fn masked_composite(
    original_damaged: &RasterImage,
    restored: &RasterImage,
    mask: &DefectMask,
) -> Result<RasterImage, FusionError> {
    ensure_same_dims(original_damaged.dims(), restored.dims())?;
    ensure_same_dims(original_damaged.dims(), mask.dims())?;
    let mut data = original_damaged.data().to_vec();
    for ((px, src), &m) in data
        .chunks_exact_mut(3)
        .zip(restored.data().chunks_exact(3))
        .zip(mask.data())
    {
        if m != 0 {
            px.copy_from_slice(src);
        }
    }
    let (w, h) = original_damaged.dims();
    Ok(RasterImage::from_raw_unchecked(w, h, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: f64) -> RasterImage {
        RasterImage::filled(3, 2, [v; 3]).unwrap()
    }

    #[test]
    fn half_zero_half_one_averages_to_half() {
        let set = PerspectiveSet::new((0..16).map(|k| flat((k % 2) as f64)).collect()).unwrap();
        assert_eq!(average_perspectives(&set).unwrap(), flat(0.5));
    }

    #[test]
    fn incomplete_set_is_rejected() {
        assert!(matches!(
            PerspectiveSet::new(vec![flat(0.1); 15]),
            Err(FusionError::MissingPerspective(15))
        ));
        let mut acc = PerspectiveAccumulator::new(3, 2);
        acc.add(&flat(0.2)).unwrap();
        assert!(acc.finish().is_err());
    }

    #[test]
    fn hand_built_fusion() {
        let stack = ScaleStack {
            at_scale: [flat(0.0), flat(0.5), flat(1.0)],
            weights: ScaleWeights::ALTERNATE,
        };
        let out = fuse_scales(&stack).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn weights_parse_and_validate() {
        assert_eq!("default".parse::<ScaleWeights>().unwrap(), ScaleWeights::DEFAULT);
        assert_eq!("0.7, 0.2, 0.1".parse::<ScaleWeights>().unwrap().preset_name(), "alternate");
        assert!("0.5,0.5,0.5".parse::<ScaleWeights>().is_err());
        assert!("1,0".parse::<ScaleWeights>().is_err());
        assert!(ScaleWeights::new([1.2, -0.1, -0.1]).is_err());
    }

    #[test]
    fn composite_selects_per_pixel() {
        let a = flat(0.1);
        let b = flat(0.9);
        let m = DefectMask::from_fn(3, 2, |x, y| (x + y) % 2 == 0);
        let out = masked_composite(&a, &b, &m).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                let want = if m.is_set(x, y) { 0.9 } else { 0.1 };
                assert_eq!(out.pixel(x, y), [want; 3]);
            }
        }
    }
}
