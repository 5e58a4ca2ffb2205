//! Colour volume fusion from the high resolution camera.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RgbdCalibration, RigidTransform, Vec3};
use crate::raster::DepthMap;
use crate::volume::{voxel_index, Frame, VolumeConfig};

/// Colour returned by [`ColorVolume::sample_color`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorSample {
    /// RGB in `[0, 255]` per channel.
    pub rgb: [f64; 3],
    /// False when no observed voxel was close enough; the colour is then
    /// the magenta placeholder.
    pub observed: bool,
}

/// Placeholder colour for unobserved space.
pub const UNOBSERVED_COLOR: [f64; 3] = [255.0, 0.0, 255.0];

/// Colour accumulation grid, finer than the geometry grid.
///
/// Each voxel stores an RGB running blend in `[0, 255]` plus a confidence
/// weight in `[0, 1]`. Weight zero marks unobserved space.
#[derive(Debug, Clone)]
pub struct ColorVolume {
    config: VolumeConfig,
    /// r, g, b, weight per voxel.
    data: Vec<[f32; 4]>,
}

/// Blends a colour observation into a stored voxel.
///
/// The stored colour moves toward the observation in proportion to the
/// observation's weight relative to the accumulated weight, and the
/// accumulated weight approaches one without ever exceeding it:
///
/// * colour: `(c_pre * w_pre + w * c) / (w_pre + w)`
/// * weight: `w_pre + w * (1 - w_pre)`
pub fn blend_color_observation(
    c_pre: [f64; 3],
    w_pre: f64,
    c: [f64; 3],
    w: f64,
) -> ([f64; 3], f64) {
    let denom = w_pre + w;
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = (c_pre[i] * w_pre + w * c[i]) / denom;
    }
    (out, w_pre + w * (1.0 - w_pre))
}

/// Confidence of the surface measurement at a depth pixel.
///
/// The surface normal is estimated from the cross product of the vectors
/// from the back-projected pixel to its right and lower neighbours; the
/// weight is the cosine between that normal and the viewing ray, clamped to
/// `[0, 1]`. Fronto-parallel surfaces score one, grazing surfaces fall
/// toward zero. Fails when the pixel or a needed neighbour has no valid
/// depth, or the neighbourhood is degenerate.
pub fn compute_point_weight(
    depth: &DepthMap,
    pixel: (u32, u32),
    intr: &CameraIntrinsics,
) -> Result<f64> {
    let (x, y) = pixel;
    let no_normal = |reason: &str| Error::NoNormal {
        x,
        y,
        reason: reason.into(),
    };
    let d = depth
        .depth_at(i64::from(x), i64::from(y))
        .ok_or_else(|| no_normal("no depth at pixel"))?;
    let dr = depth
        .depth_at(i64::from(x) + 1, i64::from(y))
        .ok_or_else(|| no_normal("no depth at right neighbour"))?;
    let dd = depth
        .depth_at(i64::from(x), i64::from(y) + 1)
        .ok_or_else(|| no_normal("no depth at lower neighbour"))?;
    let p = intr.unproject(f64::from(x), f64::from(y), d)?;
    let pr = intr.unproject(f64::from(x) + 1.0, f64::from(y), dr)?;
    let pd = intr.unproject(f64::from(x), f64::from(y) + 1.0, dd)?;
    let normal = (pr - p).cross(&(pd - p));
    let norm = normal.norm();
    if norm < 1e-12 {
        return Err(no_normal("degenerate neighbourhood"));
    }
    let ray = p.normalize();
    Ok((normal.dot(&ray) / norm).clamp(0.0, 1.0))
}

impl ColorVolume {
    /// Allocates an unobserved colour volume.
    pub fn new(config: VolumeConfig) -> Result<Self> {
        config.validate()?;
        let n = (config.color_dim as usize).pow(3);
        Ok(Self {
            config,
            data: vec![[0.0; 4]; n],
        })
    }

    /// The shared volume configuration.
    pub fn config(&self) -> &VolumeConfig {
        &self.config
    }

    /// Voxels per edge.
    pub fn dim(&self) -> u32 {
        self.config.color_dim
    }

    /// Fusion-frame center of a voxel.
    pub fn voxel_center(&self, x: u32, y: u32, z: u32) -> Vec3 {
        let p = self.config.color_pitch();
        self.config.origin
            + Vec3::new(
                (f64::from(x) + 0.5) * p,
                (f64::from(y) + 0.5) * p,
                (f64::from(z) + 0.5) * p,
            )
    }

    /// Stored colour and weight at a voxel as `[r, g, b, weight]`.
    ///
    /// # Panics
    /// Panics when the voxel is outside the grid.
    pub fn voxel(&self, x: u32, y: u32, z: u32) -> [f32; 4] {
        self.data[self.index(x, y, z)]
    }

    /// Overwrites one voxel. Useful for seeding a volume analytically.
    ///
    /// # Panics
    /// Panics when the voxel is outside the grid.
    pub fn set_voxel(&mut self, x: u32, y: u32, z: u32, rgb: [f64; 3], weight: f64) {
        let i = self.index(x, y, z);
        self.data[i] = [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32, weight as f32];
    }

    /// Stored `[r, g, b, weight]` at a flat voxel index, x-fastest.
    ///
    /// # Panics
    /// Panics when the index is outside the grid.
    pub fn voxel_by_index(&self, i: usize) -> [f32; 4] {
        self.data[i]
    }

    /// Overwrites the voxel at a flat index, x-fastest.
    ///
    /// # Panics
    /// Panics when the index is outside the grid.
    pub fn set_voxel_by_index(&mut self, i: usize, rgbw: [f32; 4]) {
        self.data[i] = rgbw;
    }

    /// Seeds every voxel from a colour function over fusion-frame points,
    /// setting all weights to one.
    pub fn fill_from_fn(&mut self, color: impl Fn(Vec3) -> [f64; 3] + Sync) {
        let dim = self.config.color_dim as usize;
        let pitch = self.config.color_pitch();
        let origin = self.config.origin;
        let plane = dim * dim;
        self.data
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(z, slab)| {
                for y in 0..dim {
                    for x in 0..dim {
                        let p = origin
                            + Vec3::new(
                                (x as f64 + 0.5) * pitch,
                                (y as f64 + 0.5) * pitch,
                                (z as f64 + 0.5) * pitch,
                            );
                        let c = color(p);
                        slab[y * dim + x] = [c[0] as f32, c[1] as f32, c[2] as f32, 1.0];
                    }
                }
            });
    }

    /// Fuses one frame's colour raster into the volume.
    ///
    /// Each voxel is projected into the frame's depth camera. Voxels within
    /// `sigma_mm` of the measured surface along the ray estimate the
    /// measurement confidence at their depth pixel, and only observations
    /// whose confidence beats `weight_gate` times the stored weight are
    /// blended in. The colour itself comes from the high resolution raster
    /// at the pixel the depth measurement maps to under the rig
    /// calibration.
    ///
    /// `first_to_current` is the motion from the fusion frame to this
    /// frame's depth camera; for frames produced by this crate it equals
    /// `frame.pose`.
    ///
    /// Voxel updates are independent, so the result is identical no matter
    /// how the grid is split across threads.
    pub fn integrate_color(
        &mut self,
        frame: &Frame,
        calib: &RgbdCalibration,
        first_to_current: &RigidTransform,
    ) -> Result<()> {
        if frame.depth.width != calib.depth.width || frame.depth.height != calib.depth.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} depth raster", calib.depth.width, calib.depth.height),
                actual: format!("{}x{}", frame.depth.width, frame.depth.height),
            });
        }
        if frame.hd.width != calib.hd.width || frame.hd.height != calib.hd.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} colour raster", calib.hd.width, calib.hd.height),
                actual: format!("{}x{}", frame.hd.width, frame.hd.height),
            });
        }
        let dim = self.config.color_dim as usize;
        let pitch = self.config.color_pitch();
        let sigma = self.config.sigma_mm;
        let gate = self.config.weight_gate;
        let origin = self.config.origin;
        let pose = *first_to_current;
        let step_x = pose.rotation.column(0) * pitch;
        let depth_intr = calib.depth;
        let plane = dim * dim;

        self.data
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(z, slab)| {
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
                        let u = depth_intr.fx * p.x / p.z + depth_intr.cx;
                        let v = depth_intr.fy * p.y / p.z + depth_intr.cy;
                        let (pu, pv) = (u.round() as i64, v.round() as i64);
                        if pu < 0 || pv < 0 {
                            continue;
                        }
                        let Some(d) = frame.depth.depth_at(pu, pv) else {
                            continue;
                        };
                        if (d - p.z).abs() >= sigma {
                            continue;
                        }
                        let voxel = &mut slab[y * dim + x];
                        let w_pre = f64::from(voxel[3]);
                        let Ok(w) =
                            compute_point_weight(&frame.depth, (pu as u32, pv as u32), &depth_intr)
                        else {
                            continue;
                        };
                        if w <= gate * w_pre || w <= 0.0 {
                            continue;
                        }
                        let Ok((hu, hv)) = calib.depth_pixel_to_hd_pixel(u, v, d) else {
                            continue;
                        };
                        if !calib.hd.contains(hu, hv) {
                            continue;
                        }
                        let c = frame.hd.sample_bilinear(hu, hv);
                        let c_pre = [
                            f64::from(voxel[0]),
                            f64::from(voxel[1]),
                            f64::from(voxel[2]),
                        ];
                        let (c_new, w_new) = blend_color_observation(c_pre, w_pre, c, w);
                        *voxel = [c_new[0] as f32, c_new[1] as f32, c_new[2] as f32, w_new as f32];
                    }
                }
            });
        Ok(())
    }

    /// Colour at a fusion-frame point.
    ///
    /// Observed voxels around the point are blended trilinearly with their
    /// interpolation coefficients renormalized over the observed subset.
    /// When all eight neighbours are unobserved, the nearest observed voxel
    /// within `color_search_radius` is used instead. If that search also
    /// fails the sample is flagged unobserved and painted magenta. Points
    /// outside the volume are an error.
    pub fn sample_color(&self, point: Vec3) -> Result<ColorSample> {
        if !self.config.contains_point(point) {
            return Err(Error::OutOfBounds(format!(
                "colour sample at {:?} outside volume",
                point
            )));
        }
        let dim = self.config.color_dim as usize;
        let pitch = self.config.color_pitch();
        let g = (point - self.config.origin) / pitch - Vec3::new(0.5, 0.5, 0.5);
        let max = (dim - 1) as f64;
        let cx = g.x.clamp(0.0, max);
        let cy = g.y.clamp(0.0, max);
        let cz = g.z.clamp(0.0, max);
        let x0 = (cx.floor() as usize).min(dim - 2);
        let y0 = (cy.floor() as usize).min(dim - 2);
        let z0 = (cz.floor() as usize).min(dim - 2);
        let (fx, fy, fz) = (cx - x0 as f64, cy - y0 as f64, cz - z0 as f64);

        let mut rgb = [0.0f64; 3];
        let mut total = 0.0f64;
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let i = voxel_index(dim, x0 + dx, y0 + dy, z0 + dz);
                    let v = self.data[i];
                    if v[3] <= 0.0 {
                        continue;
                    }
                    let c = (if dx == 0 { 1.0 - fx } else { fx })
                        * (if dy == 0 { 1.0 - fy } else { fy })
                        * (if dz == 0 { 1.0 - fz } else { fz });
                    for ch in 0..3 {
                        rgb[ch] += f64::from(v[ch]) * c;
                    }
                    total += c;
                }
            }
        }
        if total > 1e-12 {
            return Ok(ColorSample {
                rgb: [rgb[0] / total, rgb[1] / total, rgb[2] / total],
                observed: true,
            });
        }
        if let Some(i) = self.nearest_observed(point) {
            let v = self.data[i];
            return Ok(ColorSample {
                rgb: [f64::from(v[0]), f64::from(v[1]), f64::from(v[2])],
                observed: true,
            });
        }
        Ok(ColorSample {
            rgb: UNOBSERVED_COLOR,
            observed: false,
        })
    }

    /// Index of the closest observed voxel within the configured search
    /// radius of a point, breaking distance ties toward lower (z, y, x).
    fn nearest_observed(&self, point: Vec3) -> Option<usize> {
        let dim = self.config.color_dim as i64;
        let pitch = self.config.color_pitch();
        let g = (point - self.config.origin) / pitch - Vec3::new(0.5, 0.5, 0.5);
        let nx = (g.x.round() as i64).clamp(0, dim - 1);
        let ny = (g.y.round() as i64).clamp(0, dim - 1);
        let nz = (g.z.round() as i64).clamp(0, dim - 1);
        let r = i64::from(self.config.color_search_radius);
        let mut best: Option<(f64, usize)> = None;
        for z in (nz - r).max(0)..=(nz + r).min(dim - 1) {
            for y in (ny - r).max(0)..=(ny + r).min(dim - 1) {
                for x in (nx - r).max(0)..=(nx + r).min(dim - 1) {
                    let i = voxel_index(dim as usize, x as usize, y as usize, z as usize);
                    if self.data[i][3] <= 0.0 {
                        continue;
                    }
                    let center = self.voxel_center(x as u32, y as u32, z as u32);
                    let d2 = (center - point).norm_squared();
                    let better = match best {
                        None => true,
                        Some((bd, _)) => d2 < bd - 1e-12,
                    };
                    if better {
                        best = Some((d2, i));
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }

    fn index(&self, x: u32, y: u32, z: u32) -> usize {
        let dim = self.config.color_dim;
        assert!(x < dim && y < dim && z < dim, "voxel outside colour grid");
        voxel_index(dim as usize, x as usize, y as usize, z as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn blend_equal_weights_averages_colors() {
        let (c, w) = blend_color_observation([100.0; 3], 0.5, [200.0; 3], 0.5);
        assert_relative_eq!(c[0], 150.0, epsilon = 1e-12);
        assert_relative_eq!(w, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn blend_first_observation_takes_observed_color() {
        let (c, w) = blend_color_observation([0.0; 3], 0.0, [10.0, 20.0, 30.0], 0.6);
        assert_relative_eq!(c[0], 10.0, epsilon = 1e-12);
        assert_relative_eq!(c[2], 30.0, epsilon = 1e-12);
        assert_relative_eq!(w, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn blend_weight_never_exceeds_one() {
        let (_, w) = blend_color_observation([0.0; 3], 1.0, [255.0; 3], 1.0);
        assert_relative_eq!(w, 1.0, epsilon = 1e-12);
    }

    fn flat_depth(intr: &CameraIntrinsics, d: f32) -> DepthMap {
        let mut m = DepthMap::new(intr.width, intr.height).unwrap();
        for v in m.data.iter_mut() {
            *v = d;
        }
        m
    }

    #[test]
    fn fronto_parallel_plane_weight_is_one_on_axis() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 160.0, 120.0, 320, 240).unwrap();
        let depth = flat_depth(&intr, 800.0);
        let w = compute_point_weight(&depth, (160, 120), &intr).unwrap();
        assert_relative_eq!(w, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tilted_plane_weight_matches_incidence_cosine() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 160.0, 120.0, 320, 240).unwrap();
        let mut depth = DepthMap::new(intr.width, intr.height).unwrap();
        let theta: f64 = 60f64.to_radians();
        let d0 = 800.0;
        for y in 0..intr.height {
            for x in 0..intr.width {
                let d = d0 / (1.0 + (f64::from(x) - intr.cx) * theta.tan() / intr.fx);
                depth.set(x, y, d as f32);
            }
        }
        let w = compute_point_weight(&depth, (160, 120), &intr).unwrap();
        assert_relative_eq!(w, theta.cos(), epsilon = 5e-2);
    }

    #[test]
    fn weight_fails_without_neighbour_depth() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 160.0, 120.0, 320, 240).unwrap();
        let mut depth = flat_depth(&intr, 800.0);
        depth.set(161, 120, 0.0);
        assert!(matches!(
            compute_point_weight(&depth, (160, 120), &intr),
            Err(Error::NoNormal { .. })
        ));
    }

    fn small_volume() -> ColorVolume {
        let cfg = VolumeConfig::new(8, 8, 80.0, Vec3::zeros()).unwrap();
        ColorVolume::new(cfg).unwrap()
    }

    #[test]
    fn sample_midway_between_two_voxels_averages_them() {
        let mut vol = small_volume();
        vol.set_voxel(2, 2, 2, [100.0, 40.0, 0.0], 1.0);
        vol.set_voxel(3, 2, 2, [200.0, 80.0, 0.0], 1.0);
        let a = vol.voxel_center(2, 2, 2);
        let b = vol.voxel_center(3, 2, 2);
        let s = vol.sample_color((a + b) / 2.0).unwrap();
        assert!(s.observed);
        assert_relative_eq!(s.rgb[0], 150.0, epsilon = 0.5);
        assert_relative_eq!(s.rgb[1], 60.0, epsilon = 0.5);
    }

    #[test]
    fn sample_renormalizes_over_observed_neighbours() {
        let mut vol = small_volume();
        vol.set_voxel(2, 2, 2, [90.0, 90.0, 90.0], 0.4);
        // all other neighbours unobserved: any interior point near the voxel
        // must return exactly its colour
        let p = vol.voxel_center(2, 2, 2) + Vec3::new(2.0, 1.0, -1.5);
        let s = vol.sample_color(p).unwrap();
        assert!(s.observed);
        assert_relative_eq!(s.rgb[0], 90.0, epsilon = 1e-6);
    }

    #[test]
    fn sample_far_from_data_reports_unobserved() {
        let vol = small_volume();
        let s = vol.sample_color(Vec3::new(40.0, 40.0, 40.0)).unwrap();
        assert!(!s.observed);
        assert_eq!(s.rgb, UNOBSERVED_COLOR);
    }

    #[test]
    fn sample_outside_volume_is_an_error() {
        let vol = small_volume();
        assert!(matches!(
            vol.sample_color(Vec3::new(-10.0, 0.0, 0.0)),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn nearest_search_breaks_ties_deterministically() {
        let mut vol = small_volume();
        // two observed voxels equidistant from the query point
        vol.set_voxel(2, 2, 2, [10.0, 0.0, 0.0], 1.0);
        vol.set_voxel(4, 2, 2, [20.0, 0.0, 0.0], 1.0);
        // the query sits exactly on the unobserved voxel (3,2,2); the only
        // observed trilinear corner carries coefficient zero there, so the
        // nearest search decides, and it must prefer the lower index
        let q = (vol.voxel_center(2, 2, 2) + vol.voxel_center(4, 2, 2)) / 2.0;
        let s = vol.sample_color(q).unwrap();
        assert!(s.observed);
        assert_relative_eq!(s.rgb[0], 10.0, epsilon = 1e-6);
    }
}
