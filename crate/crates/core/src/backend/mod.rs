//! Inpainting backends.
//!
//! A backend maps a tile and its defect mask to a restored tile. Built-in
//! backends leave unmasked pixels bit-identical; external backends are
//! snapped back to the input wherever they drift on unmasked pixels.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{DefectMask, RasterImage};

mod diffusion;
mod external;
pub mod protocol;

pub use diffusion::{inpaint_diffusion, DiffusionBackend, DEFAULT_ITERS, DEFAULT_TOL};
pub use external::{executable_sha256, ExternalBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    High,
    Full,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::High, Band::Full];

    /// Wire code: 0 = low, 1 = high, 2 = full.
    pub fn code(self) -> u8 {
        match self {
            Band::Low => 0,
            Band::High => 1,
            Band::Full => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::High => "high",
            Band::Full => "full",
        }
    }
}

/// Where a tile sits in the pipeline; carried for error messages and
/// passed through to external backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileCoords {
    pub scale_milli: u16,
    pub perspective: u8,
    pub index: usize,
    pub origin: (isize, isize),
    pub band: Band,
}

impl Default for TileCoords {
    fn default() -> Self {
        Self {
            scale_milli: 1000,
            perspective: 0,
            index: 0,
            origin: (0, 0),
            band: Band::Full,
        }
    }
}

impl fmt::Display for TileCoords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scale {:.1} perspective {} tile {} at ({}, {}) band {}",
            self.scale_milli as f64 / 1000.0,
            self.perspective,
            self.index,
            self.origin.0,
            self.origin.1,
            self.band.name()
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InpaintRequest<'a> {
    pub tile: &'a RasterImage,
    pub mask: &'a DefectMask,
    pub coords: TileCoords,
}

impl<'a> InpaintRequest<'a> {
    pub fn new(tile: &'a RasterImage, mask: &'a DefectMask) -> Self {
        Self {
            tile,
            mask,
            coords: TileCoords::default(),
        }
    }

    pub fn with_coords(mut self, coords: TileCoords) -> Self {
        self.coords = coords;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restored {
    pub tile: RasterImage,
    /// Every pixel was masked, so the tile was filled with its mean.
    pub no_boundary: bool,
    /// Unmasked pixels an external backend moved by more than 1/255.
    pub clamped_pixels: usize,
    pub iterations: usize,
}

impl Restored {
    pub fn unchanged(tile: &RasterImage) -> Self {
        Self {
            tile: tile.clone(),
            no_boundary: false,
            clamped_pixels: 0,
            iterations: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("tile and mask sizes differ at {at}: {tile:?} vs {mask:?}")]
    Mismatch {
        at: TileCoords,
        tile: (usize, usize),
        mask: (usize, usize),
    },
    #[error("cannot start backend '{command}': {reason}")]
    Spawn { command: String, reason: String },
    #[error("backend timed out after {secs:.1}s at {at}")]
    Timeout { at: TileCoords, secs: f64 },
    #[error("backend protocol violation at {at}: {reason}")]
    Protocol { at: TileCoords, reason: String },
    #[error("backend exited with {status} at {at}")]
    Exit { at: TileCoords, status: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, BackendError::Timeout { .. })
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<Restored, BackendError>;

    /// Content hash of the code behind the backend, when it lives outside
    /// this crate.
    fn content_hash(&self) -> Option<String> {
        None
    }
}

pub(crate) fn check_request(req: &InpaintRequest<'_>) -> Result<(), BackendError> {
    if req.tile.dims() != req.mask.dims() {
        return Err(BackendError::Mismatch {
            at: req.coords,
            tile: req.tile.dims(),
            mask: req.mask.dims(),
        });
    }
    Ok(())
}

/// Returns every tile unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullBackend;

pub fn inpaint_null(req: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
    check_request(req)?;
    Ok(req.tile.clone())
}

impl Backend for NullBackend {
    fn name(&self) -> String {
        "null".into()
    }

    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<Restored, BackendError> {
        inpaint_null(req).map(|tile| Restored {
            tile,
            no_boundary: false,
            clamped_pixels: 0,
            iterations: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    Null,
    Diffusion {
        iters: usize,
        tol: f64,
    },
    External {
        command: Vec<String>,
        timeout_secs: f64,
        pool: usize,
    },
}

impl BackendKind {
    pub fn diffusion() -> Self {
        BackendKind::Diffusion {
            iters: DEFAULT_ITERS,
            tol: DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self {
            BackendKind::Null => Ok(()),
            BackendKind::Diffusion { iters, tol } => {
                if *iters == 0 || !(tol.is_finite() && *tol > 0.0) {
                    return Err(BackendError::Config(format!(
                        "diffusion needs iters >= 1 and tol > 0, got {iters} and {tol}"
                    )));
                }
                Ok(())
            }
            BackendKind::External {
                command,
                timeout_secs,
                pool,
            } => {
                if command.is_empty() || command[0].is_empty() {
                    return Err(BackendError::Config("external command is empty".into()));
                }
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(BackendError::Config(format!("timeout {timeout_secs} must be positive")));
                }
                if *pool == 0 {
                    return Err(BackendError::Config("process pool size must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        self.validate()?;
        Ok(match self {
            BackendKind::Null => Arc::new(NullBackend),
            BackendKind::Diffusion { iters, tol } => Arc::new(DiffusionBackend::new(*iters, *tol)),
            BackendKind::External {
                command,
                timeout_secs,
                pool,
            } => Arc::new(ExternalBackend::new(command.clone(), *timeout_secs, *pool)?),
        })
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Null => f.write_str("null"),
            BackendKind::Diffusion { .. } => f.write_str("diffusion"),
            BackendKind::External { command, .. } => write!(f, "external:{}", command.join(" ")),
        }
    }
}

/// Parses `null`, `diffusion` or `external:<command line>`. The command
/// line is split on whitespace. Diffusion and external settings take their
/// defaults (2000 iterations, tol 1e-5, 30 s timeout, pool of 4).
impl FromStr for BackendKind {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let kind = match s {
            "null" => BackendKind::Null,
            "diffusion" => BackendKind::diffusion(),
            _ => match s.strip_prefix("external:") {
                Some(cmd) => BackendKind::External {
                    command: cmd.split_whitespace().map(str::to_string).collect(),
                    timeout_secs: 30.0,
                    pool: 4,
                },
                None => return Err(BackendError::Config(format!("unknown backend '{s}'"))),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A primary backend that falls back to another after its retry budget is
/// spent on a tile. Every fallback is recorded.
pub struct FallbackBackend {
    primary: Arc<dyn Backend>,
    fallback: Arc<dyn Backend>,
    retries: usize,
    events: Mutex<Vec<FallbackEvent>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FallbackEvent {
    pub at: String,
    pub attempts: usize,
    pub last_error: String,
    pub fallback: String,
}

pub const DEFAULT_RETRIES: usize = 2;

impl FallbackBackend {
    pub fn new(primary: Arc<dyn Backend>, fallback: Arc<dyn Backend>, retries: usize) -> Self {
        Self {
            primary,
            fallback,
            retries,
            events: Mutex::new(Vec::new()),
        }
    }

    /// Recorded fallbacks, sorted by location so the list does not depend
    /// on scheduling.
    pub fn events(&self) -> Vec<FallbackEvent> {
        let mut ev = self.events.lock().expect("fallback log poisoned").clone();
        ev.sort_by(|a, b| a.at.cmp(&b.at));
        ev
    }
}

impl Backend for FallbackBackend {
    fn name(&self) -> String {
        format!("{} (fallback {})", self.primary.name(), self.fallback.name())
    }

    fn content_hash(&self) -> Option<String> {
        self.primary.content_hash()
    }

    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<Restored, BackendError> {
        check_request(req)?;
        let mut last = None;
        for attempt in 0..=self.retries {
            match self.primary.inpaint(req) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    log::debug!("{} failed (attempt {}): {e}", self.primary.name(), attempt + 1);
                    last = Some(e);
                }
            }
        }
        let err = last.expect("at least one attempt");
        log::warn!("{} gave up after {} attempts, using {}: {err}", self.primary.name(), self.retries + 1, self.fallback.name());
        self.events.lock().expect("fallback log poisoned").push(FallbackEvent {
            at: req.coords.to_string(),
            attempts: self.retries + 1,
            last_error: err.to_string(),
            fallback: self.fallback.name(),
        });
        self.fallback.inpaint(req)
    }
}
