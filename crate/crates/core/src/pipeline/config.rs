//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! tile = 256
//! scales = 1.0, 0.8, 0.6
//! scale_weights = 0.8, 0.1, 0.1     # or: default | alternate
//! cutoff = 0.10
//! merge_weights = 0.2, 0.2, 0.6     # low, high, full
//! backend = diffusion               # null | diffusion | external:<cmd>
//! backend_low = ...                 # per-band overrides
//! backend_high = ...
//! backend_full = ...
//! fallback = diffusion
//! diffusion_iters = 2000
//! diffusion_tol = 1e-5
//! external_timeout = 30
//! external_pool = 4
//! retries = 2
//! second_stage = false
//! workers = 4
//! seed = 0
//! fill = 0.5
//! ```
//!
//! Later pairs override earlier ones, so command-line settings are applied
//! by appending them after the file's pairs.

use serde::Serialize;

use crate::backend::{BackendKind, DEFAULT_RETRIES};
use crate::fusion::ScaleWeights;
use crate::frequency::{check_cutoff, MergeWeights, DEFAULT_CUTOFF};
use crate::tiling::DEFAULT_TILE;

use super::PipelineError;

pub const WORKERS_ENV: &str = "MURAL3M_WORKERS";

/// Backend selection for each frequency band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandBackends {
    pub low: BackendKind,
    pub high: BackendKind,
    pub full: BackendKind,
}

impl BandBackends {
    pub fn all(kind: BackendKind) -> Self {
        Self {
            low: kind.clone(),
            high: kind.clone(),
            full: kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub tile: usize,
    pub scales: Vec<f64>,
    pub scale_weights: ScaleWeights,
    pub cutoff: f64,
    pub merge_weights: MergeWeights,
    pub backends: BandBackends,
    /// Used for a tile once an external backend has failed `retries + 1`
    /// times on it.
    pub fallback: BackendKind,
    pub retries: usize,
    /// Runs the full-band backend again over each merged tile.
    pub second_stage: bool,
    #[serde(skip)]
    pub workers: usize,
    pub seed: u64,
    pub fill: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tile: DEFAULT_TILE,
            scales: vec![1.0, 0.8, 0.6],
            scale_weights: ScaleWeights::DEFAULT,
            cutoff: DEFAULT_CUTOFF,
            merge_weights: MergeWeights::default(),
            backends: BandBackends::all(BackendKind::diffusion()),
            fallback: BackendKind::diffusion(),
            retries: DEFAULT_RETRIES,
            second_stage: false,
            workers: 1,
            seed: 0,
            fill: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn with_backend(mut self, kind: BackendKind) -> Self {
        self.backends = BandBackends::all(kind);
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.tile == 0 || self.tile % 4 != 0 {
            return bad(format!("tile {} must be a positive multiple of 4", self.tile));
        }
        if self.scales.len() != 3 {
            return bad(format!("expected three scales, got {}", self.scales.len()));
        }
        if self.scales[0] != 1.0 {
            return bad("the first scale must be 1.0".into());
        }
        if self.scales.windows(2).any(|p| !(p[1] < p[0])) || self.scales.iter().any(|s| !(*s > 0.0)) {
            return bad(format!("scales {:?} must be positive and strictly descending", self.scales));
        }
        self.scale_weights
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        check_cutoff(self.cutoff).map_err(|e| PipelineError::Config(e.to_string()))?;
        self.merge_weights
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for kind in [&self.backends.low, &self.backends.high, &self.backends.full, &self.fallback] {
            kind.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if matches!(self.fallback, BackendKind::External { .. }) {
            return bad("the fallback backend must be built in".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return bad(format!("fill {} must lie in [0, 1]", self.fill));
        }
        Ok(())
    }

    /// Applies the worker-count environment override, if set.
    pub fn apply_env(&mut self) -> Result<(), PipelineError> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            self.workers = v
                .trim()
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| PipelineError::Config(format!("{WORKERS_ENV}={v} is not a positive integer")))?;
        }
        Ok(())
    }

    /// Builds a configuration from defaults plus ordered `key = value`
    /// pairs; later pairs win.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        let mut backend_all: Option<String> = None;
        let mut per_band: [Option<String>; 3] = [None, None, None];
        let mut fallback: Option<String> = None;
        let mut iters = None;
        let mut tol = None;
        let mut timeout = None;
        let mut pool = None;
        for (k, v) in pairs {
            let (key, value) = (k.as_ref().trim(), v.as_ref().trim());
            let err = |what: &str| PipelineError::Config(format!("{key} = {value}: {what}"));
            let num = || value.parse::<f64>().map_err(|_| err("not a number"));
            let int = || value.parse::<usize>().map_err(|_| err("not a non-negative integer"));
            let triple = || -> Result<[f64; 3], PipelineError> {
                let v: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("expected three comma-separated numbers"))?;
                v.try_into().map_err(|_| err("expected three comma-separated numbers"))
            };
            match key {
                "tile" => cfg.tile = int()?,
                "scales" => {
                    cfg.scales = value
                        .split(',')
                        .map(|p| p.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err("expected comma-separated numbers"))?
                }
                "scale_weights" => cfg.scale_weights = value.parse().map_err(|e: crate::fusion::FusionError| err(&e.to_string()))?,
                "cutoff" => cfg.cutoff = num()?,
                "merge_weights" => {
                    let [l, h, f] = triple()?;
                    cfg.merge_weights = MergeWeights {
                        low: [l; 3],
                        high: [h; 3],
                        full: [f; 3],
                    };
                }
                "backend" => backend_all = Some(value.to_string()),
                "backend_low" => per_band[0] = Some(value.to_string()),
                "backend_high" => per_band[1] = Some(value.to_string()),
                "backend_full" => per_band[2] = Some(value.to_string()),
                "fallback" => fallback = Some(value.to_string()),
                "diffusion_iters" => iters = Some(int()?),
                "diffusion_tol" => tol = Some(num()?),
                "external_timeout" => timeout = Some(num()?),
                "external_pool" => pool = Some(int()?),
                "retries" => cfg.retries = int()?,
                "second_stage" => cfg.second_stage = parse_bool(value).ok_or_else(|| err("expected true or false"))?,
                "workers" => cfg.workers = int()?,
                "seed" => cfg.seed = value.parse().map_err(|_| err("not an unsigned integer"))?,
                "fill" => cfg.fill = num()?,
                _ => return Err(PipelineError::Config(format!("unknown key '{key}'"))),
            }
        }
        let parse_kind = |s: &str| -> Result<BackendKind, PipelineError> {
            let mut kind: BackendKind = s.parse().map_err(|e: crate::backend::BackendError| PipelineError::Config(e.to_string()))?;
            match &mut kind {
                BackendKind::Diffusion { iters: i, tol: t } => {
                    *i = iters.unwrap_or(*i);
                    *t = tol.unwrap_or(*t);
                }
                BackendKind::External {
                    timeout_secs, pool: p, ..
                } => {
                    *timeout_secs = timeout.unwrap_or(*timeout_secs);
                    *p = pool.unwrap_or(*p);
                }
                BackendKind::Null => {}
            }
            Ok(kind)
        };
        let base = backend_all.as_deref().unwrap_or("diffusion");
        cfg.backends = BandBackends {
            low: parse_kind(per_band[0].as_deref().unwrap_or(base))?,
            high: parse_kind(per_band[1].as_deref().unwrap_or(base))?,
            full: parse_kind(per_band[2].as_deref().unwrap_or(base))?,
        };
        cfg.fallback = parse_kind(fallback.as_deref().unwrap_or("diffusion"))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Parses `key = value` lines; `#` starts a comment. Errors name the line.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, PipelineError> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(PipelineError::Config(format!("line {}: empty key", n + 1)));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.scales, vec![1.0, 0.8, 0.6]);
        assert_eq!(cfg.scale_weights.0, [0.8, 0.1, 0.1]);
        assert_eq!(cfg.fill, 0.5);
    }

    #[test]
    fn file_pairs_then_overrides() {
        let text = "# demo\ntile = 128\nscale_weights = alternate  # preset\nbackend = null\nbackend_full = diffusion\ndiffusion_iters = 50\n";
        let mut pairs = parse_config_text(text).unwrap();
        pairs.push(("tile".into(), "64".into()));
        let cfg = PipelineConfig::from_pairs(&pairs).unwrap();
        assert_eq!(cfg.tile, 64);
        assert_eq!(cfg.scale_weights, ScaleWeights::ALTERNATE);
        assert_eq!(cfg.backends.low, BackendKind::Null);
        assert_eq!(cfg.backends.full, BackendKind::Diffusion { iters: 50, tol: 1e-5 });
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config_text("tile 256").is_err());
        assert!(PipelineConfig::from_pairs(&[("colour", "red")]).is_err());
        assert!(PipelineConfig::from_pairs(&[("scales", "1.0, 0.6, 0.8")]).is_err());
        assert!(PipelineConfig::from_pairs(&[("scale_weights", "0.5,0.5,0.5")]).is_err());
        assert!(PipelineConfig::from_pairs(&[("tile", "30")]).is_err());
        assert!(PipelineConfig::from_pairs(&[("fallback", "external:foo")]).is_err());
    }
}
