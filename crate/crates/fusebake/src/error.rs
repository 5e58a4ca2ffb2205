//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by fusion, meshing, texturing, and file handling.
#[derive(Error, Debug)]
pub enum Error {
    /// A point with non-positive camera-space depth cannot be projected.
    #[error("point behind camera: z = {z}")]
    BehindCamera {
        /// Camera-space z of the offending point, in mm.
        z: f64,
    },

    /// A depth value was zero, negative, or not finite.
    #[error("invalid depth value: {depth}")]
    InvalidDepth {
        /// The offending depth, in mm.
        depth: f64,
    },

    /// Camera intrinsics failed validation.
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    /// A rigid transform failed validation.
    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Raster or volume dimensions do not match what the operation expects.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// Dimensions the operation required.
        expected: String,
        /// Dimensions it was given.
        actual: String,
    },

    /// A surface normal could not be estimated at a depth pixel.
    #[error("no normal at pixel ({x}, {y}): {reason}")]
    NoNormal {
        /// Pixel column.
        x: u32,
        /// Pixel row.
        y: u32,
        /// Why estimation failed.
        reason: String,
    },

    /// An index or point fell outside a raster, volume, or texture map.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// A mesh reduction rate outside (0, 1].
    #[error("invalid reduction rate {rate}; expected 0 < rate <= 1")]
    InvalidRate {
        /// The offending rate.
        rate: f64,
    },

    /// A texture map is too large for the configured atlas page.
    #[error("texture map {w}x{h} exceeds atlas page edge {page_edge}")]
    MapTooLarge {
        /// Map width in texels.
        w: u32,
        /// Map height in texels.
        h: u32,
        /// Atlas page edge length in texels.
        page_edge: u32,
    },

    /// A mesh is malformed (bad index, degenerate connectivity, ...).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file did not match the expected format.
    #[error("format error in {path}: {reason}")]
    Format {
        /// File that failed to parse.
        path: String,
        /// What was wrong.
        reason: String,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Builds a [`Error::Format`] from anything displayable.
    pub fn format(path: impl Into<String>, reason: impl std::fmt::Display) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
