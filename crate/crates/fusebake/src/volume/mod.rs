//! Volumetric fusion of depth and colour observations.
//!
//! Two axis-aligned cubic voxel grids share one physical extent: a geometry
//! grid holding a truncated signed distance field fused from depth rasters,
//! and a finer colour grid accumulating appearance observations from the
//! high resolution camera. Keeping the colour grid finer than the geometry
//! grid is what lets a later texture bake recover detail that the geometry
//! resolution alone would lose.
//!
//! All fusion happens in the fusion frame: the camera space of the first
//! depth frame. Every [`Frame`] carries the rigid motion from that frame to
//! its own camera space.

mod color;
mod raycast;
mod tsdf;

pub use color::{blend_color_observation, compute_point_weight, ColorSample, ColorVolume, UNOBSERVED_COLOR};
pub use raycast::{raycast_tsdf, RaycastHit, RaycastMap};
pub use tsdf::TsdfVolume;

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::raster::{DepthMap, RgbRaster};

/// Shared configuration of the geometry and colour grids.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeConfig {
    /// Voxels per edge of the geometry grid.
    pub geo_dim: u32,
    /// Voxels per edge of the colour grid. At least `geo_dim`.
    pub color_dim: u32,
    /// Physical edge length of the cubic volume, in mm.
    pub size_mm: f64,
    /// Fusion-frame position of the volume's minimum corner, in mm.
    pub origin: Vec3,
    /// Truncation band of the signed distance field, in mm.
    pub truncation_mm: f64,
    /// Maximum distance between a colour voxel and the observed surface for
    /// the voxel to accept the observation, in mm.
    pub sigma_mm: f64,
    /// A colour observation must carry a weight above `weight_gate` times
    /// the stored weight to update a voxel.
    pub weight_gate: f64,
    /// Cap on the accumulated depth observation weight per geometry voxel.
    pub max_depth_weight: f32,
    /// Chebyshev radius, in colour voxels, searched for observed data when
    /// a colour sample lands in unobserved space.
    pub color_search_radius: u32,
}

impl VolumeConfig {
    /// Creates a config with derived defaults: truncation four geometry
    /// voxels, sigma 20 mm, weight gate 0.8.
    pub fn new(geo_dim: u32, color_dim: u32, size_mm: f64, origin: Vec3) -> Result<Self> {
        let cfg = Self {
            geo_dim,
            color_dim,
            size_mm,
            origin,
            truncation_mm: 4.0 * size_mm / f64::from(geo_dim.max(1)),
            sigma_mm: 20.0,
            weight_gate: 0.8,
            max_depth_weight: 128.0,
            color_search_radius: 2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks all invariants.
    pub fn validate(&self) -> Result<()> {
        if self.geo_dim < 2 || self.color_dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid dimensions must be at least 2, got geo {} colour {}",
                self.geo_dim, self.color_dim
            )));
        }
        if self.color_dim < self.geo_dim {
            return Err(Error::InvalidConfig(format!(
                "colour grid ({}) must be at least as fine as the geometry grid ({})",
                self.color_dim, self.geo_dim
            )));
        }
        if !(self.size_mm.is_finite() && self.size_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "volume size must be positive, got {}",
                self.size_mm
            )));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "volume origin must be finite, got {:?}",
                self.origin
            )));
        }
        if !(self.truncation_mm > 0.0 && self.truncation_mm.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "truncation must be positive, got {}",
                self.truncation_mm
            )));
        }
        if !(self.sigma_mm > 0.0 && self.sigma_mm.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma_mm
            )));
        }
        if !(0.0..1.0).contains(&self.weight_gate) {
            return Err(Error::InvalidConfig(format!(
                "weight gate must lie in [0, 1), got {}",
                self.weight_gate
            )));
        }
        if !(self.max_depth_weight > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "max depth weight must be positive, got {}",
                self.max_depth_weight
            )));
        }
        Ok(())
    }

    /// Edge length of a geometry voxel, in mm.
    pub fn geo_pitch(&self) -> f64 {
        self.size_mm / f64::from(self.geo_dim)
    }

    /// Edge length of a colour voxel, in mm.
    pub fn color_pitch(&self) -> f64 {
        self.size_mm / f64::from(self.color_dim)
    }

    /// Whether a fusion-frame point lies inside the physical volume.
    pub fn contains_point(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.origin[i] && p[i] <= self.origin[i] + self.size_mm)
    }
}

impl Default for VolumeConfig {
    fn default() -> Self {
        let size = 1000.0;
        Self::new(384, 768, size, Vec3::new(-size / 2.0, -size / 2.0, 0.0))
            .expect("default volume config is valid")
    }
}

/// One captured (or synthesized) RGB-D observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Position of the frame in its sequence, starting at 0.
    pub index: u32,
    /// Depth raster from the depth camera, in mm.
    pub depth: DepthMap,
    /// Colour raster from the high resolution camera.
    pub hd: RgbRaster,
    /// Rigid motion from the fusion frame (first frame's depth camera
    /// space) to this frame's depth camera space.
    pub pose: RigidTransform,
}

/// Row-major voxel index with x fastest, as used by both grids.
pub(crate) fn voxel_index(dim: usize, x: usize, y: usize, z: usize) -> usize {
    (z * dim + y) * dim + x
}
