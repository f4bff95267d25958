//! Tile export for building training sets from a giant image.

use std::path::{Path, PathBuf};

use crate::image::RasterImage;
use crate::io::save_png;
use crate::tiling::{cut, make_plan, PERSPECTIVES};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTile {
    pub scale_milli: u16,
    pub perspective: usize,
    pub index: usize,
    pub image: RasterImage,
}

impl CorpusTile {
    /// `s<scale_milli>_p<perspective>_t<index>.png`, zero-padded so that
    /// lexical order equals emission order.
    pub fn file_name(&self) -> String {
        format!("s{:04}_p{:02}_t{:05}.png", self.scale_milli, self.perspective, self.index)
    }
}

/// Every tile of the given perspectives at the given scales, ordered by
/// scale, then perspective, then row-major tile index.
pub fn tile_corpus(
    giant: &RasterImage,
    tile: usize,
    scales: &[f64],
    perspectives: &[usize],
) -> Result<Vec<CorpusTile>, PipelineError> {
    let (w, h) = giant.dims();
    let mut out = Vec::new();
    for &s in scales {
        if !(s > 0.0 && s <= 1.0) {
            return Err(PipelineError::Config(format!("scale {s} must lie in (0, 1]")));
        }
        let (sw, sh) = super::scaled_dims(w, h, s);
        let img = if (sw, sh) == (w, h) { giant.clone() } else { giant.resize(sw, sh)? };
        let plan = make_plan(sw, sh, tile)?;
        for &k in perspectives {
            let sheet = cut(&img, &plan, k)?;
            out.extend(sheet.tiles.into_iter().enumerate().map(|(index, image)| CorpusTile {
                scale_milli: super::scale_milli(s),
                perspective: k,
                index,
                image,
            }));
        }
    }
    Ok(out)
}

/// All 16 perspectives.
pub fn all_perspectives() -> Vec<usize> {
    (0..PERSPECTIVES).collect()
}

/// Writes the tiles as PNGs into `dir` and returns the written paths.
pub fn write_corpus(tiles: &[CorpusTile], dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        context: format!("creating {}", dir.display()),
        source,
    })?;
    tiles
        .iter()
        .map(|t| {
            let p = dir.join(t.file_name());
            save_png(&t.image, &p)?;
            Ok(p)
        })
        .collect()
}
