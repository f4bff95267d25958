//! Offset tiling under 16 perspectives.
//!
//! Perspective `k` uses offset `(dx, dy) = ((k % 4)·s, (k / 4)·s)` with
//! stride `s = tile / 4`. Its tile boundaries sit at image columns
//! `x ≡ dx (mod tile)` and rows `y ≡ dy (mod tile)`, i.e. the perspective-0
//! grid translated by the offset. The image is placed on a canvas of the
//! plan's padded size with a lead margin of `(tile - d) % tile`; canvas
//! pixels outside the image read the reflected image.

use serde::Serialize;
use thiserror::Error;

use crate::image::{reflect, DefectMask, ImageError, RasterImage, CHANNELS};

pub const DEFAULT_TILE: usize = 256;
pub const PERSPECTIVES: usize = 16;

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("tile size {0} must be a positive multiple of 4")]
    BadTileSize(usize),
    #[error("source dimensions must be non-zero, got {0}x{1}")]
    ZeroDimension(usize, usize),
    #[error("perspective {0} out of range 0..16")]
    PerspectiveOutOfRange(usize),
    #[error("source is {actual:?}, plan expects {expected:?}")]
    SourceMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("sheet has {actual} tiles, plan expects {expected}")]
    TileCount { expected: usize, actual: usize },
    #[error("tile {index} is {actual:?}, expected {expected}x{expected}")]
    TileSize {
        index: usize,
        expected: usize,
        actual: (usize, usize),
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TilePlan {
    pub tile: usize,
    pub offsets: [(usize, usize); PERSPECTIVES],
    pub padded_w: usize,
    pub padded_h: usize,
    pub source_w: usize,
    pub source_h: usize,
}

pub fn make_plan(w: usize, h: usize, tile: usize) -> Result<TilePlan, TilingError> {
    if tile == 0 || tile % 4 != 0 {
        return Err(TilingError::BadTileSize(tile));
    }
    if w == 0 || h == 0 {
        return Err(TilingError::ZeroDimension(w, h));
    }
    let s = tile / 4;
    let mut offsets = [(0, 0); PERSPECTIVES];
    for (k, o) in offsets.iter_mut().enumerate() {
        *o = ((k % 4) * s, (k / 4) * s);
    }
    let cover = |n: usize| (n + 3 * s).div_ceil(tile) * tile;
    Ok(TilePlan {
        tile,
        offsets,
        padded_w: cover(w),
        padded_h: cover(h),
        source_w: w,
        source_h: h,
    })
}

impl TilePlan {
    /// Tiles per row and per column of every sheet.
    pub fn grid(&self) -> (usize, usize) {
        (self.padded_w / self.tile, self.padded_h / self.tile)
    }

    pub fn tiles_per_sheet(&self) -> usize {
        let (c, r) = self.grid();
        c * r
    }

    /// Lead margin `(pad_x, pad_y)` of the canvas for a perspective.
    pub fn lead(&self, perspective: usize) -> (usize, usize) {
        let (dx, dy) = self.offsets[perspective];
        ((self.tile - dx) % self.tile, (self.tile - dy) % self.tile)
    }

    /// Image coordinates of the top-left pixel of a tile; negative or
    /// beyond-the-edge positions lie in the reflected margin.
    pub fn tile_origin(&self, perspective: usize, index: usize) -> (isize, isize) {
        let (cols, _) = self.grid();
        let (px, py) = self.lead(perspective);
        let (col, row) = (index % cols, index / cols);
        (
            (col * self.tile) as isize - px as isize,
            (row * self.tile) as isize - py as isize,
        )
    }

    /// Image columns `x` in `1..source_w` such that a tile boundary of the
    /// perspective runs between `x - 1` and `x`.
    pub fn seam_columns(&self, perspective: usize) -> Vec<usize> {
        let dx = self.offsets[perspective].0;
        (1..self.source_w).filter(|x| x % self.tile == dx).collect()
    }

    /// Image rows with a tile boundary directly above them.
    pub fn seam_rows(&self, perspective: usize) -> Vec<usize> {
        let dy = self.offsets[perspective].1;
        (1..self.source_h).filter(|y| y % self.tile == dy).collect()
    }

    fn check_perspective(&self, k: usize) -> Result<(), TilingError> {
        if k < PERSPECTIVES {
            Ok(())
        } else {
            Err(TilingError::PerspectiveOutOfRange(k))
        }
    }

    fn check_source(&self, dims: (usize, usize)) -> Result<(), TilingError> {
        if dims == (self.source_w, self.source_h) {
            Ok(())
        } else {
            Err(TilingError::SourceMismatch {
                expected: (self.source_w, self.source_h),
                actual: dims,
            })
        }
    }

    /// Cuts one tile of a perspective from an interleaved plane with
    /// `channels` samples per pixel.
    pub fn cut_tile<T: Copy>(&self, data: &[T], channels: usize, perspective: usize, index: usize) -> Vec<T> {
        let (w, h) = (self.source_w, self.source_h);
        assert_eq!(data.len(), w * h * channels);
        let t = self.tile as isize;
        let (ox, oy) = self.tile_origin(perspective, index);
        let xs: Vec<usize> = (0..t).map(|x| reflect(ox + x, w)).collect();
        let mut tile = Vec::with_capacity(self.tile * self.tile * channels);
        for y in 0..t {
            let row = reflect(oy + y, h) * w;
            for &sx in &xs {
                let at = (row + sx) * channels;
                tile.extend_from_slice(&data[at..at + channels]);
            }
        }
        tile
    }

    /// Writes the part of a tile that lies inside the image into `out`.
    pub fn write_tile<T: Copy>(&self, out: &mut [T], tile: &[T], channels: usize, perspective: usize, index: usize) {
        let (w, h) = (self.source_w, self.source_h);
        assert_eq!(out.len(), w * h * channels);
        assert_eq!(tile.len(), self.tile * self.tile * channels);
        let t = self.tile as isize;
        let (ox, oy) = self.tile_origin(perspective, index);
        let x0 = ox.max(0);
        let x1 = (ox + t).min(w as isize);
        if x0 >= x1 {
            return;
        }
        for y in oy.max(0)..(oy + t).min(h as isize) {
            let ty = (y - oy) as usize;
            let src = (ty * self.tile + (x0 - ox) as usize) * channels;
            let dst = (y as usize * w + x0 as usize) * channels;
            let len = (x1 - x0) as usize * channels;
            out[dst..dst + len].copy_from_slice(&tile[src..src + len]);
        }
    }

    /// All tiles of one perspective, row-major.
    pub fn cut_plane<T: Copy>(&self, data: &[T], channels: usize, perspective: usize) -> Vec<Vec<T>> {
        (0..self.tiles_per_sheet())
            .map(|i| self.cut_tile(data, channels, perspective, i))
            .collect()
    }

    /// Inverse of [`cut_plane`](Self::cut_plane).
    pub fn assemble_plane<T: Copy + Default>(&self, tiles: &[Vec<T>], channels: usize, perspective: usize) -> Vec<T> {
        let mut out = vec![T::default(); self.source_w * self.source_h * channels];
        for (i, tile) in tiles.iter().enumerate() {
            self.write_tile(&mut out, tile, channels, perspective, i);
        }
        out
    }
}

/// The tiles of one perspective.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSheet {
    pub plan: TilePlan,
    pub perspective: usize,
    pub tiles: Vec<RasterImage>,
}

pub fn cut(img: &RasterImage, plan: &TilePlan, perspective: usize) -> Result<TileSheet, TilingError> {
    plan.check_perspective(perspective)?;
    plan.check_source(img.dims())?;
    let tiles = plan
        .cut_plane(img.data(), CHANNELS, perspective)
        .into_iter()
        .map(|d| RasterImage::from_raw_unchecked(plan.tile, plan.tile, d))
        .collect();
    Ok(TileSheet {
        plan: plan.clone(),
        perspective,
        tiles,
    })
}

pub fn cut_mask(mask: &DefectMask, plan: &TilePlan, perspective: usize) -> Result<Vec<DefectMask>, TilingError> {
    plan.check_perspective(perspective)?;
    plan.check_source(mask.dims())?;
    Ok(plan
        .cut_plane(mask.data(), 1, perspective)
        .into_iter()
        .map(|d| DefectMask::from_raw_unchecked(plan.tile, plan.tile, d))
        .collect())
}

pub fn assemble(sheet: &TileSheet) -> Result<RasterImage, TilingError> {
    let plan = &sheet.plan;
    plan.check_perspective(sheet.perspective)?;
    if sheet.tiles.len() != plan.tiles_per_sheet() {
        return Err(TilingError::TileCount {
            expected: plan.tiles_per_sheet(),
            actual: sheet.tiles.len(),
        });
    }
    for (index, t) in sheet.tiles.iter().enumerate() {
        if t.dims() != (plan.tile, plan.tile) {
            return Err(TilingError::TileSize {
                index,
                expected: plan.tile,
                actual: t.dims(),
            });
        }
    }
    let tiles: Vec<Vec<f64>> = sheet.tiles.iter().map(|t| t.data().to_vec()).collect();
    let data = plan.assemble_plane(&tiles, CHANNELS, sheet.perspective);
    Ok(RasterImage::from_raw_unchecked(plan.source_w, plan.source_h, data))
}
