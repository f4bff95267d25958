//! PNG input and output.
//!
//! Colour images are written as 8-bit RGB and masks as 8-bit grayscale
//! (0 = keep, 255 = defect). Quantisation rounds half up.

use std::fs::File;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::image::{DefectMask, ImageError, RasterImage};

/// Encodes a `[0, 1]` value as an 8-bit sample, rounding half up.
pub fn quantize_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    color: ColorType,
    /// Samples normalised to `[0, 1]`.
    samples: Vec<f64>,
}

fn decode(bytes: &[u8], path: &str) -> Result<Decoded, ImageError> {
    let err = |reason: String| ImageError::Decode {
        path: path.to_string(),
        reason,
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| err(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    let buf_len = reader
        .output_buffer_size()
        .ok_or_else(|| err("image too large".into()))?;
    let mut buf = vec![0u8; buf_len];
    let info = reader.next_frame(&mut buf).map_err(|e| err(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let channels = color.samples();
    let samples: Vec<f64> = match depth {
        BitDepth::Eight => buf.iter().map(|&b| b as f64 / 255.0).collect(),
        BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        other => return Err(err(format!("unsupported bit depth {other:?}"))),
    };
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        color,
        samples,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, ImageError> {
    std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Decodes an 8- or 16-bit RGB/RGBA PNG from memory. Alpha is discarded.
pub fn decode_png(bytes: &[u8], name: &str) -> Result<RasterImage, ImageError> {
    let d = decode(bytes, name)?;
    if !matches!(d.color, ColorType::Rgb | ColorType::Rgba) {
        return Err(ImageError::Decode {
            path: name.to_string(),
            reason: format!("unsupported colour type {:?}, expected RGB or RGBA", d.color),
        });
    }
    let data: Vec<f64> = d
        .samples
        .chunks_exact(d.channels)
        .flat_map(|px| [px[0], px[1], px[2]])
        .collect();
    RasterImage::new(d.width, d.height, data)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<RasterImage, ImageError> {
    let path = path.as_ref();
    decode_png(&read_file(path)?, &path.display().to_string())
}

fn encode(width: usize, height: usize, color: ColorType, bytes: &[u8], path: &str) -> Result<Vec<u8>, ImageError> {
    let err = |e: png::EncodingError| ImageError::Encode {
        path: path.to_string(),
        reason: e.to_string(),
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(err)?;
        writer.write_image_data(bytes).map_err(err)?;
        writer.finish().map_err(err)?;
    }
    Ok(out)
}

pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>, ImageError> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize_u8(v)).collect();
    encode(img.width(), img.height(), ColorType::Rgb, &bytes, "<memory>")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
    use std::io::Write;
    let io_err = |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn save_png(img: &RasterImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    write_file(path.as_ref(), &encode_png(img)?)
}

/// Loads a mask PNG. Any colour type is accepted; a pixel is defective
/// when its first sample is at least half scale.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<DefectMask, ImageError> {
    let path = path.as_ref();
    let d = decode(&read_file(path)?, &path.display().to_string())?;
    let data = d
        .samples
        .chunks_exact(d.channels)
        .map(|px| (px[0] >= 0.5) as u8)
        .collect();
    DefectMask::new(d.width, d.height, data)
}

pub fn encode_mask_png(mask: &DefectMask) -> Result<Vec<u8>, ImageError> {
    let bytes: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    encode(mask.width(), mask.height(), ColorType::Grayscale, &bytes, "<memory>")
}

pub fn save_mask_png(mask: &DefectMask, path: impl AsRef<Path>) -> Result<(), ImageError> {
    write_file(path.as_ref(), &encode_mask_png(mask)?)
}

/// Writes a `[0, 1]` plane as an 8-bit grayscale PNG.
pub fn save_gray_png(plane: &crate::image::GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes: Vec<u8> = plane.data().iter().map(|&v| quantize_u8(v)).collect();
    let encoded = encode(plane.width(), plane.height(), ColorType::Grayscale, &bytes, "<memory>")?;
    write_file(path.as_ref(), &encoded)
}
