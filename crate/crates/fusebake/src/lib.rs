//! Volumetric RGB-D reconstruction with high resolution texture baking.
//!
//! The crate fuses depth frames into a truncated signed distance volume,
//! accumulates colour observations in a finer colour volume, extracts and
//! simplifies a triangle mesh, and bakes per-triangle textures into atlas
//! pages so that a heavily decimated mesh keeps the appearance of the full
//! reconstruction. A synthetic renderer stands in for a physical RGB-D
//! camera, and a small software rasterizer plus an image sharpness metric
//! make the quality of the results measurable.
//!
//! The usual flow is:
//!
//! 1. [`synth`]: describe an analytic scene and render an orbit of RGB-D
//!    frames for it.
//! 2. [`volume`]: integrate the depth rasters into a [`volume::TsdfVolume`]
//!    and the colour rasters into a [`volume::ColorVolume`].
//! 3. [`mesh`]: run marching cubes over the distance volume and decimate the
//!    result with quadric error metrics.
//! 4. [`texture`]: bake one texture map per triangle from the colour volume
//!    and merge the maps into shared atlas pages.
//! 5. [`render`] / [`metrics`]: rasterize snapshots of the textured model and
//!    score their sharpness.
//!
//! See the `examples/` directory for a runnable walk-through of each stage
//! and [`pipeline`] for the end-to-end orchestration used by the CLI.

pub mod error;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod synth;
pub mod texture;
pub mod volume;

pub use error::{Error, Result};
