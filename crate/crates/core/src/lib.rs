//! Restoration pipeline for images far larger than an inpainting model's
//! input: synthetic defect masks, frequency-band decomposition, offset
//! tiling with perspective averaging, multi-scale fusion, and metrics.
//!
//! Inpainting itself is delegated to a [`backend::Backend`]; the crate ships
//! a null backend, a harmonic diffusion fill, and an external-process
//! backend speaking a small framed binary protocol.

pub mod image;
pub mod io;
pub mod backend;
pub mod frequency;
pub mod fusion;
pub mod maskgen;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod tiling;

pub use image::{DefectMask, GrayImage, ImageError, RasterImage};
