//! Robustness sweep over mask coverage.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::image::RasterImage;
use crate::io::load_png;
use crate::maskgen::{generate, MaskConfig, MaskError, MaskKind, MaskSpec};
use crate::metrics::{compare, format_psnr, MetricsReport};

use super::{restore_giant, PipelineConfig, PipelineError};

pub const CSV_HEADER: &str = "coverage,seed,mae,mse,psnr,ssim,mae255,mse255";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub coverages: Vec<f64>,
    pub mask_kind: MaskKind,
    pub seeds: Vec<u64>,
    pub reference: PathBuf,
    /// Report path without extension; `.csv` and `.json` are written.
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(c) = self.coverages.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return Err(PipelineError::Config(format!("coverage {c} must lie in (0, 1)")));
        }
        Ok(())
    }
}

/// One (coverage, seed) run. Exactly one of `metrics` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub coverage: f64,
    pub seed: u64,
    pub achieved: Option<f64>,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    pub fallbacks: usize,
}

/// Arithmetic mean of the successful runs at one coverage. PSNR is `+∞`
/// when any run had identical images.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMean {
    pub coverage: f64,
    pub runs: usize,
    pub mae: f64,
    pub mse: f64,
    #[serde(serialize_with = "ser_psnr")]
    pub psnr: f64,
    pub ssim: f64,
    pub mae255: f64,
    pub mse255: f64,
}

fn ser_psnr<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub mask_kind: MaskKind,
    pub width: usize,
    pub height: usize,
    pub config: PipelineConfig,
    pub scale_weights_preset: &'static str,
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMean>,
}

impl SweepReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mean_for(&self, coverage: f64) -> Option<&SweepMean> {
        self.means.iter().find(|m| m.coverage == coverage)
    }

    /// Per-run rows followed, for each coverage, by a row with seed `mean`.
    /// Failed runs keep their coverage and seed with empty metric fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        let mut coverages: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !coverages.contains(&r.coverage) {
                coverages.push(r.coverage);
            }
        }
        for c in coverages {
            for r in self.rows.iter().filter(|r| r.coverage == c) {
                match &r.metrics {
                    Some(m) => {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{}",
                            r.coverage,
                            r.seed,
                            m.mae,
                            m.mse,
                            format_psnr(m.psnr),
                            m.ssim,
                            m.mae255,
                            m.mse255
                        );
                    }
                    None => {
                        let _ = writeln!(s, "{},{},,,,,,", r.coverage, r.seed);
                    }
                }
            }
            if let Some(m) = self.mean_for(c) {
                let _ = writeln!(
                    s,
                    "{},mean,{},{},{},{},{},{}",
                    m.coverage,
                    m.mae,
                    m.mse,
                    format_psnr(m.psnr),
                    m.ssim,
                    m.mae255,
                    m.mse255
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep report serialises")
    }

    /// Writes `<base>.csv` and `<base>.json`.
    pub fn write(&self, base: &Path) -> Result<(PathBuf, PathBuf), PipelineError> {
        let csv = base.with_extension("csv");
        let json = base.with_extension("json");
        for (p, body) in [(&csv, self.to_csv()), (&json, self.to_json())] {
            std::fs::write(p, body).map_err(|source| PipelineError::Io {
                context: format!("writing {}", p.display()),
                source,
            })?;
        }
        Ok((csv, json))
    }
}

fn mean_of(coverage: f64, ms: &[&MetricsReport]) -> SweepMean {
    let n = ms.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
    SweepMean {
        coverage,
        runs: ms.len(),
        mae: avg(|m| m.mae),
        mse: avg(|m| m.mse),
        psnr: avg(|m| m.psnr),
        ssim: avg(|m| m.ssim),
        mae255: avg(|m| m.mae255),
        mse255: avg(|m| m.mse255),
    }
}

/// Runs the sweep against an in-memory reference image.
pub fn run_sweep_on(reference: &RasterImage, spec: &SweepSpec, cfg: &PipelineConfig) -> Result<SweepReport, PipelineError> {
    spec.validate()?;
    cfg.validate()?;
    let (w, h) = reference.dims();
    let mask_cfg = MaskConfig::default();
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &coverage in &spec.coverages {
        let start = rows.len();
        for &seed in &spec.seeds {
            let mspec = MaskSpec::new(spec.mask_kind, coverage, w, h, seed);
            let generated = match generate(&mspec, &mask_cfg) {
                Ok(g) => g,
                Err(e @ MaskError::CoverageUnreachable { achieved, .. }) => {
                    log::warn!("coverage {coverage} seed {seed}: {e}");
                    rows.push(SweepRow {
                        coverage,
                        seed,
                        achieved: Some(achieved),
                        metrics: None,
                        error: Some(e.to_string()),
                        fallbacks: 0,
                    });
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let damaged = reference.apply_mask(&generated.mask, cfg.fill)?;
            let out = restore_giant(&damaged, &generated.mask, cfg)?;
            rows.push(SweepRow {
                coverage,
                seed,
                achieved: Some(generated.achieved),
                metrics: Some(compare(&out.image, reference)?),
                error: None,
                fallbacks: out.report.fallbacks.len(),
            });
        }
        let ok: Vec<&MetricsReport> = rows[start..].iter().filter_map(|r| r.metrics.as_ref()).collect();
        if !ok.is_empty() {
            means.push(mean_of(coverage, &ok));
        }
    }
    Ok(SweepReport {
        mask_kind: spec.mask_kind,
        width: w,
        height: h,
        config: cfg.clone(),
        scale_weights_preset: cfg.scale_weights.preset_name(),
        rows,
        means,
    })
}

/// Loads the reference, runs the sweep and writes the report files when
/// `spec.output` is set.
pub fn run_sweep(spec: &SweepSpec, cfg: &PipelineConfig) -> Result<SweepReport, PipelineError> {
    spec.validate()?;
    let reference = load_png(&spec.reference)?;
    let report = run_sweep_on(&reference, spec, cfg)?;
    if let Some(base) = &spec.output {
        report.write(base)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendKind;

    fn spec(coverages: Vec<f64>, seeds: Vec<u64>) -> SweepSpec {
        SweepSpec {
            coverages,
            mask_kind: MaskKind::Block,
            seeds,
            reference: PathBuf::new(),
            output: None,
        }
    }

    #[test]
    fn empty_coverage_list_gives_an_empty_report() {
        let img = RasterImage::filled(32, 32, [0.5; 3]).unwrap();
        let r = run_sweep_on(&img, &spec(vec![], vec![1, 2]), &PipelineConfig::default()).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn rejects_coverages_outside_the_open_interval() {
        let img = RasterImage::filled(32, 32, [0.5; 3]).unwrap();
        assert!(run_sweep_on(&img, &spec(vec![1.0], vec![1]), &PipelineConfig::default()).is_err());
    }

    #[test]
    fn two_seeds_give_two_rows_and_their_mean() {
        let img = RasterImage::from_fn(48, 40, |x, y| [x as f64 / 48.0, y as f64 / 40.0, 0.3]);
        let cfg = PipelineConfig {
            tile: 16,
            ..PipelineConfig::default()
        }
        .with_backend(BackendKind::Null);
        let r = run_sweep_on(&img, &spec(vec![0.2], vec![3, 4]), &cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        let m = &r.means[0];
        let a = r.rows[0].metrics.unwrap();
        let b = r.rows[1].metrics.unwrap();
        assert_eq!(m.mae, (a.mae + b.mae) / 2.0);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().starts_with("0.2,mean,"));
    }
}
