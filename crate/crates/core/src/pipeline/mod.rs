//! End-to-end restoration of a damaged giant image.
//!
//! For each scale `s` the damaged image is resized and decomposed into
//! bands; each of the 16 perspectives cuts the bands into tiles, restores
//! every tile that contains defects (one backend call per band), merges the
//! bands per tile and reassembles. The 16 reconstructions are averaged, and
//! the change the average makes to the merged unrestored bands is upsampled
//! and added to the damaged image. The three scale results are fused by
//! weight and pasted back under the mask.
//!
//! Because every scale contributes a correction rather than a replacement,
//! a backend that changes nothing leaves the damaged image bit-identical.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendKind, Band, FallbackBackend, FallbackEvent, InpaintRequest, TileCoords};
use crate::fusion::{fuse_samples, masked_composite, FusionError, PerspectiveAccumulator, PerspectiveSet};
use crate::frequency::{decompose, merge_samples, BandSet, FrequencyError};
use crate::image::{clamp_unit, ensure_same_dims, resize_plane, DefectMask, ImageError, RasterImage, CHANNELS};
use crate::maskgen::MaskError;
use crate::metrics::MetricsError;
use crate::tiling::{make_plan, TilePlan, TilingError, PERSPECTIVES};

mod config;
mod corpus;
mod sweep;

pub use config::{parse_config_text, BandBackends, PipelineConfig, WORKERS_ENV};
pub use corpus::{all_perspectives, tile_corpus, write_corpus, CorpusTile};
pub use sweep::{run_sweep, run_sweep_on, SweepMean, SweepReport, SweepRow, SweepSpec, CSV_HEADER};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Whether the failure came from a restoration backend.
    pub fn is_backend(&self) -> bool {
        matches!(self, PipelineError::Backend(_))
    }
}

/// Instantiated backends for one pipeline run.
pub struct Engine {
    bands: [Arc<dyn Backend>; 3],
    fallbacks: Vec<Arc<FallbackBackend>>,
    pool: rayon::ThreadPool,
}

impl Engine {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let fallback = cfg.fallback.build()?;
        let mut built: Vec<(BackendKind, Arc<dyn Backend>)> = Vec::new();
        let mut fallbacks = Vec::new();
        let mut get = |kind: &BackendKind| -> Result<Arc<dyn Backend>, PipelineError> {
            if let Some((_, b)) = built.iter().find(|(k, _)| k == kind) {
                return Ok(b.clone());
            }
            let raw = kind.build()?;
            let b: Arc<dyn Backend> = if matches!(kind, BackendKind::External { .. }) {
                let fb = Arc::new(FallbackBackend::new(raw, fallback.clone(), cfg.retries));
                fallbacks.push(fb.clone());
                fb
            } else {
                raw
            };
            built.push((kind.clone(), b.clone()));
            Ok(b)
        };
        let bands = [get(&cfg.backends.low)?, get(&cfg.backends.high)?, get(&cfg.backends.full)?];
        Self::assemble(bands, fallbacks, cfg.workers)
    }

    /// An engine with explicit backends per band (low, high, full).
    pub fn with_backends(bands: [Arc<dyn Backend>; 3], workers: usize) -> Result<Self, PipelineError> {
        Self::assemble(bands, Vec::new(), workers)
    }

    fn assemble(bands: [Arc<dyn Backend>; 3], fallbacks: Vec<Arc<FallbackBackend>>, workers: usize) -> Result<Self, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| PipelineError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { bands, fallbacks, pool })
    }

    fn backend(&self, band: Band) -> &Arc<dyn Backend> {
        &self.bands[band as usize]
    }

    pub fn fallback_events(&self) -> Vec<FallbackEvent> {
        let mut ev: Vec<FallbackEvent> = self.fallbacks.iter().flat_map(|f| f.events()).collect();
        ev.sort_by(|a, b| a.at.cmp(&b.at));
        ev
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BackendStats {
    pub tiles_restored: usize,
    pub backend_calls: usize,
    pub clamped_pixels: usize,
    pub no_boundary_tiles: usize,
}

impl BackendStats {
    fn merge(&mut self, o: &BackendStats) {
        self.tiles_restored += o.tiles_restored;
        self.backend_calls += o.backend_calls;
        self.clamped_pixels += o.clamped_pixels;
        self.no_boundary_tiles += o.no_boundary_tiles;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BackendInfo {
    pub band: Band,
    pub name: String,
    pub sha256: Option<String>,
}

/// Everything a run did that is not the image itself. Contains no timing
/// or worker count, so identical inputs give identical reports.
#[derive(Debug, Clone, Serialize)]
pub struct RestoreReport {
    pub width: usize,
    pub height: usize,
    pub mask_coverage: f64,
    pub scales: Vec<f64>,
    pub scale_weights: [f64; 3],
    pub scale_weights_preset: &'static str,
    pub tile: usize,
    pub cutoff: f64,
    pub merge_weights: crate::frequency::MergeWeights,
    pub second_stage: bool,
    pub backends: Vec<BackendInfo>,
    pub stats: BackendStats,
    pub fallbacks: Vec<FallbackEvent>,
}

#[derive(Debug, Clone)]
pub struct RestoreOutput {
    pub image: RasterImage,
    pub report: RestoreReport,
}

fn scaled_dims(w: usize, h: usize, s: f64) -> (usize, usize) {
    let f = |n: usize| ((n as f64 * s).round() as usize).max(1);
    (f(w), f(h))
}

fn scale_milli(s: f64) -> u16 {
    (s * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16
}

/// Inputs of one scale: resized damaged image and mask, bands and the
/// merged unrestored bands.
struct ScaleInput {
    plan: TilePlan,
    mask: DefectMask,
    bands: BandSet,
    baseline: Vec<f64>,
    milli: u16,
}

fn prepare_scale(damaged: &RasterImage, mask: &DefectMask, cfg: &PipelineConfig, s: f64) -> Result<ScaleInput, PipelineError> {
    let (w, h) = damaged.dims();
    let (sw, sh) = scaled_dims(w, h, s);
    let (img, m) = if (sw, sh) == (w, h) {
        (damaged.clone(), mask.clone())
    } else {
        (damaged.resize(sw, sh)?, mask.resize_support(sw, sh)?)
    };
    let bands = decompose(&img, cfg.cutoff)?;
    let baseline = merge_samples(bands.low.data(), bands.high.data(), bands.full.data(), &cfg.merge_weights);
    Ok(ScaleInput {
        plan: make_plan(sw, sh, cfg.tile)?,
        mask: m,
        bands,
        baseline,
        milli: scale_milli(s),
    })
}

/// Restores every defective tile of one perspective and returns the
/// reconstruction as interleaved samples.
fn reconstruct_perspective(
    engine: &Engine,
    cfg: &PipelineConfig,
    input: &ScaleInput,
    k: usize,
    stats: &mut BackendStats,
) -> Result<Vec<f64>, PipelineError> {
    let plan = &input.plan;
    let t = plan.tile;
    let masked: Vec<(usize, Vec<u8>)> = (0..plan.tiles_per_sheet())
        .map(|i| (i, plan.cut_tile(input.mask.data(), 1, k, i)))
        .filter(|(_, m)| m.iter().any(|&v| v != 0))
        .collect();
    let results: Vec<Result<(Vec<f64>, BackendStats), PipelineError>> = engine.pool.install(|| {
        masked
            .par_iter()
            .map(|(i, m)| {
                let mask = DefectMask::from_raw_unchecked(t, t, m.clone());
                let mut local = BackendStats {
                    tiles_restored: 1,
                    ..Default::default()
                };
                let coords = |band| TileCoords {
                    scale_milli: input.milli,
                    perspective: k as u8,
                    index: *i,
                    origin: plan.tile_origin(k, *i),
                    band,
                };
                let mut restore = |band: Band, source: &RasterImage| -> Result<Vec<f64>, PipelineError> {
                    let tile = RasterImage::from_raw_unchecked(t, t, plan.cut_tile(source.data(), CHANNELS, k, *i));
                    let req = InpaintRequest::new(&tile, &mask).with_coords(coords(band));
                    let r = engine.backend(band).inpaint(&req)?;
                    local.backend_calls += 1;
                    local.clamped_pixels += r.clamped_pixels;
                    local.no_boundary_tiles += r.no_boundary as usize;
                    Ok(r.tile.into_data())
                };
                let low = restore(Band::Low, &input.bands.low)?;
                let high = restore(Band::High, &input.bands.high)?;
                let full = restore(Band::Full, &input.bands.full)?;
                let mut merged = merge_samples(&low, &high, &full, &cfg.merge_weights);
                if cfg.second_stage {
                    merged.iter_mut().for_each(|v| *v = clamp_unit(*v));
                    let tile = RasterImage::from_raw_unchecked(t, t, merged);
                    let req = InpaintRequest::new(&tile, &mask).with_coords(coords(Band::Full));
                    let r = engine.backend(Band::Full).inpaint(&req)?;
                    local.backend_calls += 1;
                    local.clamped_pixels += r.clamped_pixels;
                    merged = r.tile.into_data();
                }
                Ok((merged, local))
            })
            .collect()
    });
    let mut recon = input.baseline.clone();
    for ((i, _), r) in masked.iter().zip(results) {
        let (tile, local) = r?;
        stats.merge(&local);
        plan.write_tile(&mut recon, &tile, CHANNELS, k, *i);
    }
    Ok(recon)
}

/// The 16 perspective reconstructions of one scale, at that scale's size,
/// clamped to `[0, 1]`.
pub fn perspective_set(
    engine: &Engine,
    damaged: &RasterImage,
    mask: &DefectMask,
    cfg: &PipelineConfig,
    scale: f64,
) -> Result<PerspectiveSet, PipelineError> {
    let input = prepare_scale(damaged, mask, cfg, scale)?;
    let (w, h) = (input.plan.source_w, input.plan.source_h);
    let mut stats = BackendStats::default();
    let mut out = Vec::with_capacity(PERSPECTIVES);
    for k in 0..PERSPECTIVES {
        let mut r = reconstruct_perspective(engine, cfg, &input, k, &mut stats)?;
        r.iter_mut().for_each(|v| *v = clamp_unit(*v));
        out.push(RasterImage::from_raw_unchecked(w, h, r));
    }
    Ok(PerspectiveSet::new(out)?)
}

/// Restoration at one scale, resized back to the input size.
fn restore_scale(
    engine: &Engine,
    damaged: &RasterImage,
    mask: &DefectMask,
    cfg: &PipelineConfig,
    scale: f64,
    stats: &mut BackendStats,
) -> Result<Vec<f64>, PipelineError> {
    let input = prepare_scale(damaged, mask, cfg, scale)?;
    let (sw, sh) = (input.plan.source_w, input.plan.source_h);
    let mut acc = PerspectiveAccumulator::new(sw, sh);
    for k in 0..PERSPECTIVES {
        let recon = reconstruct_perspective(engine, cfg, &input, k, stats)?;
        acc.add_samples(&recon);
    }
    let mut delta = acc.mean_samples();
    for (d, b) in delta.iter_mut().zip(&input.baseline) {
        *d -= b;
    }
    let (w, h) = damaged.dims();
    if (sw, sh) != (w, h) {
        delta = resize_plane(&delta, sw, sh, CHANNELS, w, h);
    }
    Ok(damaged.data().iter().zip(&delta).map(|(&d, &c)| clamp_unit(d + c)).collect())
}

pub fn restore_with(
    engine: &Engine,
    damaged: &RasterImage,
    mask: &DefectMask,
    cfg: &PipelineConfig,
) -> Result<RestoreOutput, PipelineError> {
    cfg.validate()?;
    ensure_same_dims(damaged.dims(), mask.dims())?;
    let (w, h) = damaged.dims();
    let mut stats = BackendStats::default();
    let mut per_scale = Vec::with_capacity(cfg.scales.len());
    for &s in &cfg.scales {
        log::info!("restoring scale {s}");
        per_scale.push(restore_scale(engine, damaged, mask, cfg, s, &mut stats)?);
    }
    let mut fused = fuse_samples([&per_scale[0], &per_scale[1], &per_scale[2]], &cfg.scale_weights);
    fused.iter_mut().for_each(|v| *v = clamp_unit(*v));
    let fused = RasterImage::from_raw_unchecked(w, h, fused);
    let image = masked_composite(damaged, &fused, mask)?;
    let backends = Band::ALL
        .iter()
        .map(|&band| {
            let b = engine.backend(band);
            BackendInfo {
                band,
                name: b.name(),
                sha256: b.content_hash(),
            }
        })
        .collect();
    let report = RestoreReport {
        width: w,
        height: h,
        mask_coverage: mask.coverage(),
        scales: cfg.scales.clone(),
        scale_weights: cfg.scale_weights.0,
        scale_weights_preset: cfg.scale_weights.preset_name(),
        tile: cfg.tile,
        cutoff: cfg.cutoff,
        merge_weights: cfg.merge_weights,
        second_stage: cfg.second_stage,
        backends,
        stats,
        fallbacks: engine.fallback_events(),
    };
    Ok(RestoreOutput { image, report })
}

pub fn restore_giant(damaged: &RasterImage, mask: &DefectMask, cfg: &PipelineConfig) -> Result<RestoreOutput, PipelineError> {
    let engine = Engine::from_config(cfg)?;
    restore_with(&engine, damaged, mask, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_dims_round_and_stay_positive() {
        assert_eq!(scaled_dims(1024, 1000, 0.8), (819, 800));
        assert_eq!(scaled_dims(1, 1, 0.6), (1, 1));
        assert_eq!(scale_milli(0.6), 600);
    }

    #[test]
    fn small_null_run_is_identity() {
        let img = RasterImage::from_fn(40, 24, |x, y| [x as f64 / 40.0, y as f64 / 24.0, 0.5]);
        let mask = DefectMask::from_fn(40, 24, |x, y| (x * y) % 7 == 0);
        let damaged = img.apply_mask(&mask, 0.5).unwrap();
        let cfg = PipelineConfig {
            tile: 16,
            ..PipelineConfig::default()
        }
        .with_backend(BackendKind::Null);
        let out = restore_giant(&damaged, &mask, &cfg).unwrap();
        assert_eq!(out.image, damaged);
        assert!(out.report.stats.tiles_restored > 0);
    }
}
