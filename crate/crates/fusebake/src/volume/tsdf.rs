//! Truncated signed distance volume and depth integration.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::volume::{voxel_index, Frame, VolumeConfig};

/// Truncated signed distance field over the geometry grid.
///
/// Each voxel stores a distance in units of the truncation band, in
/// `[-1, 1]`, plus the accumulated observation weight. Weight zero marks a
/// voxel that no frame has observed; such voxels carry no distance
/// information.
#[derive(Debug, Clone)]
pub struct TsdfVolume {
    config: VolumeConfig,
    tsdf: Vec<f32>,
    weight: Vec<f32>,
}

impl TsdfVolume {
    /// Allocates an unobserved volume.
    pub fn new(config: VolumeConfig) -> Result<Self> {
        config.validate()?;
        let n = (config.geo_dim as usize).pow(3);
        Ok(Self {
            config,
            tsdf: vec![0.0; n],
            weight: vec![0.0; n],
        })
    }

    /// The shared volume configuration.
    pub fn config(&self) -> &VolumeConfig {
        &self.config
    }

    /// Voxels per edge.
    pub fn dim(&self) -> u32 {
        self.config.geo_dim
    }

    /// Fusion-frame center of a voxel.
    pub fn voxel_center(&self, x: u32, y: u32, z: u32) -> Vec3 {
        let p = self.config.geo_pitch();
        self.config.origin
            + Vec3::new(
                (f64::from(x) + 0.5) * p,
                (f64::from(y) + 0.5) * p,
                (f64::from(z) + 0.5) * p,
            )
    }

    /// Stored distance at a voxel, in truncation units.
    ///
    /// # Panics
    /// Panics when the voxel is outside the grid.
    pub fn tsdf_at(&self, x: u32, y: u32, z: u32) -> f32 {
        self.tsdf[self.index(x, y, z)]
    }

    /// Accumulated observation weight at a voxel.
    ///
    /// # Panics
    /// Panics when the voxel is outside the grid.
    pub fn weight_at(&self, x: u32, y: u32, z: u32) -> f32 {
        self.weight[self.index(x, y, z)]
    }

    /// Overwrites one voxel. Useful for seeding a volume from an analytic
    /// distance field instead of depth frames.
    ///
    /// # Panics
    /// Panics when the voxel is outside the grid.
    pub fn set_voxel(&mut self, x: u32, y: u32, z: u32, tsdf: f32, weight: f32) {
        let i = self.index(x, y, z);
        self.tsdf[i] = tsdf.clamp(-1.0, 1.0);
        self.weight[i] = weight;
    }

    /// Stored (distance, weight) pair at a flat voxel index, x-fastest.
    ///
    /// # Panics
    /// Panics when the index is outside the grid.
    pub fn voxel_by_index(&self, i: usize) -> (f32, f32) {
        (self.tsdf[i], self.weight[i])
    }

    /// Overwrites the voxel at a flat index, x-fastest.
    ///
    /// # Panics
    /// Panics when the index is outside the grid.
    pub fn set_voxel_by_index(&mut self, i: usize, tsdf: f32, weight: f32) {
        self.tsdf[i] = tsdf.clamp(-1.0, 1.0);
        self.weight[i] = weight;
    }

    /// Seeds every voxel from a signed distance function over fusion-frame
    /// points (mm, negative inside), truncating to the configured band and
    /// setting all weights to one.
    pub fn fill_from_sdf(&mut self, sdf: impl Fn(Vec3) -> f64 + Sync) {
        let dim = self.config.geo_dim as usize;
        let trunc = self.config.truncation_mm;
        let pitch = self.config.geo_pitch();
        let origin = self.config.origin;
        let plane = dim * dim;
        self.tsdf
            .par_chunks_mut(plane)
            .zip(self.weight.par_chunks_mut(plane))
            .enumerate()
            .for_each(|(z, (tsdf_slab, weight_slab))| {
                for y in 0..dim {
                    for x in 0..dim {
                        let p = origin
                            + Vec3::new(
                                (x as f64 + 0.5) * pitch,
                                (y as f64 + 0.5) * pitch,
                                (z as f64 + 0.5) * pitch,
                            );
                        let d = (sdf(p) / trunc).clamp(-1.0, 1.0);
                        tsdf_slab[y * dim + x] = d as f32;
                        weight_slab[y * dim + x] = 1.0;
                    }
                }
            });
    }

    /// Trilinear distance sample at a fusion-frame point.
    ///
    /// Returns `None` outside the grid's interpolatable region or when any
    /// of the eight surrounding voxels is unobserved.
    pub fn sample_tsdf(&self, p: Vec3) -> Option<f64> {
        let dim = self.config.geo_dim as usize;
        let pitch = self.config.geo_pitch();
        let g = (p - self.config.origin) / pitch - Vec3::new(0.5, 0.5, 0.5);
        let x0 = g.x.floor();
        let y0 = g.y.floor();
        let z0 = g.z.floor();
        if x0 < 0.0
            || y0 < 0.0
            || z0 < 0.0
            || x0 + 1.0 > (dim - 1) as f64
            || y0 + 1.0 > (dim - 1) as f64
            || z0 + 1.0 > (dim - 1) as f64
        {
            return None;
        }
        let (fx, fy, fz) = (g.x - x0, g.y - y0, g.z - z0);
        let (x0, y0, z0) = (x0 as usize, y0 as usize, z0 as usize);
        let mut acc = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let i = voxel_index(dim, x0 + dx, y0 + dy, z0 + dz);
                    if self.weight[i] <= 0.0 {
                        return None;
                    }
                    let cx = if dx == 0 { 1.0 - fx } else { fx };
                    let cy = if dy == 0 { 1.0 - fy } else { fy };
                    let cz = if dz == 0 { 1.0 - fz } else { fz };
                    acc += f64::from(self.tsdf[i]) * cx * cy * cz;
                }
            }
        }
        Some(acc)
    }

    fn index(&self, x: u32, y: u32, z: u32) -> usize {
        let dim = self.config.geo_dim;
        assert!(x < dim && y < dim && z < dim, "voxel outside geometry grid");
        voxel_index(dim as usize, x as usize, y as usize, z as usize)
    }

    /// Fuses one depth raster into the volume.
    ///
    /// Every voxel is projected into the frame's depth camera. Voxels that
    /// project onto a valid measurement within the truncation band in front
    /// of the observed surface, or anywhere beyond it toward the camera,
    /// blend the observed distance into their running weighted average.
    /// Voxels hidden more than one truncation band behind the surface are
    /// left untouched, since the measurement says nothing about them.
    ///
    /// Voxel updates are independent, so the result is identical no matter
    /// how the grid is split across threads.
    pub fn integrate_depth(&mut self, frame: &Frame, depth_intr: &CameraIntrinsics) -> Result<()> {
        if frame.depth.width != depth_intr.width || frame.depth.height != depth_intr.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} depth raster", depth_intr.width, depth_intr.height),
                actual: format!("{}x{}", frame.depth.width, frame.depth.height),
            });
        }
        let dim = self.config.geo_dim as usize;
        let pitch = self.config.geo_pitch();
        let trunc = self.config.truncation_mm;
        let max_weight = self.config.max_depth_weight;
        let origin = self.config.origin;
        let pose = frame.pose;
        let step_x = pose.rotation.column(0) * pitch;
        let depth = &frame.depth;
        let intr = *depth_intr;
        let plane = dim * dim;

        self.tsdf
            .par_chunks_mut(plane)
            .zip(self.weight.par_chunks_mut(plane))
            .enumerate()
            .for_each(|(z, (tsdf_slab, weight_slab))| {
                for y in 0..dim {
                    let row_start = origin
                        + Vec3::new(
                            0.5 * pitch,
                            (y as f64 + 0.5) * pitch,
                            (z as f64 + 0.5) * pitch,
                        );
                    let mut cam = pose.transform_point(row_start);
                    for x in 0..dim {
                        let p = cam;
                        cam += step_x;
                        if p.z <= 0.0 {
                            continue;
                        }
                        let u = intr.fx * p.x / p.z + intr.cx;
                        let v = intr.fy * p.y / p.z + intr.cy;
                        let (pu, pv) = (u.round() as i64, v.round() as i64);
                        let Some(d) = depth.depth_at(pu, pv) else {
                            continue;
                        };
                        let sdf = d - p.z;
                        if sdf < -trunc {
                            continue;
                        }
                        let obs = (sdf / trunc).min(1.0);
                        let i = y * dim + x;
                        let w = f64::from(weight_slab[i]);
                        let fused = (f64::from(tsdf_slab[i]) * w + obs) / (w + 1.0);
                        tsdf_slab[i] = fused as f32;
                        weight_slab[i] = (weight_slab[i] + 1.0).min(max_weight);
                    }
                }
            });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::raster::{DepthMap, RgbRaster};

    fn wall_frame(intr: &CameraIntrinsics, depth_mm: f32) -> Frame {
        let mut depth = DepthMap::new(intr.width, intr.height).unwrap();
        for v in depth.data.iter_mut() {
            *v = depth_mm;
        }
        Frame {
            index: 0,
            depth,
            hd: RgbRaster::new(4, 4).unwrap(),
            pose: RigidTransform::identity(),
        }
    }

    fn test_intr() -> CameraIntrinsics {
        CameraIntrinsics::new(250.0, 250.0, 160.0, 120.0, 320, 240).unwrap()
    }

    #[test]
    fn wall_produces_zero_crossing_at_measured_depth() {
        let intr = test_intr();
        let cfg = VolumeConfig::new(64, 64, 400.0, Vec3::new(-200.0, -200.0, 500.0)).unwrap();
        let pitch = cfg.geo_pitch();
        let mut vol = TsdfVolume::new(cfg).unwrap();
        vol.integrate_depth(&wall_frame(&intr, 700.0), &intr).unwrap();

        // walk the voxel column nearest the optical axis
        let c = 32u32;
        let mut crossing = None;
        for z in 0..vol.dim() - 1 {
            let (a, b) = (vol.tsdf_at(c, c, z), vol.tsdf_at(c, c, z + 1));
            if vol.weight_at(c, c, z) > 0.0 && vol.weight_at(c, c, z + 1) > 0.0 && a > 0.0 && b <= 0.0
            {
                let t = f64::from(a) / f64::from(a - b);
                let z0 = vol.voxel_center(c, c, z).z;
                crossing = Some(z0 + t * pitch);
                break;
            }
        }
        let z = crossing.expect("no zero crossing found along optical axis");
        assert!(
            (z - 700.0).abs() < pitch / 2.0,
            "crossing at {z}, expected 700 +- {}",
            pitch / 2.0
        );
    }

    #[test]
    fn integration_keeps_tsdf_in_unit_range_and_skips_hidden_voxels() {
        let intr = test_intr();
        let cfg = VolumeConfig::new(32, 32, 400.0, Vec3::new(-200.0, -200.0, 500.0)).unwrap();
        let trunc = cfg.truncation_mm;
        let mut vol = TsdfVolume::new(cfg).unwrap();
        vol.integrate_depth(&wall_frame(&intr, 700.0), &intr).unwrap();

        let mut observed = 0u32;
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let w = vol.weight_at(x, y, z);
                    let t = vol.tsdf_at(x, y, z);
                    assert!((-1.0..=1.0).contains(&t));
                    let zc = vol.voxel_center(x, y, z).z;
                    if zc > 700.0 + trunc + 1.0 {
                        assert_eq!(w, 0.0, "voxel behind the wall at z {zc} was touched");
                    }
                    if w > 0.0 {
                        observed += 1;
                    }
                }
            }
        }
        assert!(observed > 0);
    }

    #[test]
    fn repeated_integration_saturates_weight_at_cap() {
        let intr = test_intr();
        let mut cfg = VolumeConfig::new(16, 16, 400.0, Vec3::new(-200.0, -200.0, 500.0)).unwrap();
        cfg.max_depth_weight = 3.0;
        let mut vol = TsdfVolume::new(cfg).unwrap();
        let frame = wall_frame(&intr, 700.0);
        for _ in 0..5 {
            vol.integrate_depth(&frame, &intr).unwrap();
        }
        let mut max_w: f32 = 0.0;
        for z in 0..16 {
            for y in 0..16 {
                for x in 0..16 {
                    max_w = max_w.max(vol.weight_at(x, y, z));
                }
            }
        }
        assert_eq!(max_w, 3.0);
    }

    #[test]
    fn mismatched_depth_raster_is_rejected() {
        let intr = test_intr();
        let cfg = VolumeConfig::new(16, 16, 400.0, Vec3::zeros()).unwrap();
        let mut vol = TsdfVolume::new(cfg).unwrap();
        let mut frame = wall_frame(&intr, 700.0);
        frame.depth = DepthMap::new(100, 100).unwrap();
        assert!(vol.integrate_depth(&frame, &intr).is_err());
    }

    #[test]
    fn sdf_fill_and_trilinear_sampling_agree_on_a_sphere() {
        let cfg = VolumeConfig::new(48, 48, 400.0, Vec3::new(-200.0, -200.0, -200.0)).unwrap();
        let mut vol = TsdfVolume::new(cfg).unwrap();
        vol.fill_from_sdf(|p| p.norm() - 120.0);
        // on-surface points sample near zero
        let s = vol.sample_tsdf(Vec3::new(120.0, 0.0, 0.0)).unwrap();
        assert!(s.abs() < 0.1, "surface sample {s}");
        // well inside is clamped negative, outside positive
        assert!(vol.sample_tsdf(Vec3::new(0.0, 0.0, 0.0)).unwrap() < -0.9);
        assert!(vol.sample_tsdf(Vec3::new(180.0, 0.0, 0.0)).unwrap() > 0.9);
        // outside the grid there is no sample
        assert!(vol.sample_tsdf(Vec3::new(500.0, 0.0, 0.0)).is_none());
    }
}
