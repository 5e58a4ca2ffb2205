//! Synthetic RGB-D capture of analytic scenes.
//!
//! Scenes are unions of signed distance primitives with attached albedo
//! patterns. A sphere tracer renders depth from the rig's depth camera and
//! colour from its high resolution camera, standing in for a physical
//! sensor while keeping exact ground truth for every pixel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{look_at, CameraIntrinsics, RgbdCalibration, RigidTransform, Vec3};
use crate::raster::{DepthMap, RgbRaster};
use crate::volume::Frame;

/// Background colour where a colour ray escapes the scene.
pub const BACKGROUND_COLOR: [f64; 3] = [30.0, 30.0, 30.0];

/// Sphere tracing stops when the distance falls below this, in mm.
const TRACE_EPSILON: f64 = 1e-3;
/// Sphere tracing gives up beyond this ray length, in mm.
const TRACE_MAX_RANGE: f64 = 20_000.0;
/// Sphere tracing gives up after this many steps.
const TRACE_MAX_STEPS: u32 = 256;

/// Analytic solid with an exact signed distance function.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Sphere around `center`.
    Sphere {
        /// Center in world coordinates, mm.
        center: Vec3,
        /// Radius in mm.
        radius_mm: f64,
    },
    /// Axis-aligned box around `center`.
    Cuboid {
        /// Center in world coordinates, mm.
        center: Vec3,
        /// Half edge lengths in mm.
        half_extents: Vec3,
    },
    /// Half-space boundary `normal . p = offset_mm`, solid on the side the
    /// normal points away from.
    Plane {
        /// Unit outward normal.
        normal: Vec3,
        /// Signed distance of the plane from the origin along the normal.
        offset_mm: f64,
    },
}

impl Shape {
    /// Signed distance from a world point to the shape surface, negative
    /// inside.
    pub fn sdf(&self, p: Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius_mm } => (p - center).norm() - radius_mm,
            Shape::Cuboid {
                center,
                half_extents,
            } => {
                let d = (p - center).abs() - half_extents;
                let outside = Vec3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0));
                outside.norm() + d.x.max(d.y).max(d.z).min(0.0)
            }
            Shape::Plane { normal, offset_mm } => normal.dot(&p) - offset_mm,
        }
    }
}

/// Colour pattern painted on a shape's surface.
#[derive(Debug, Clone, PartialEq)]
pub enum AlbedoPattern {
    /// One colour everywhere.
    Solid {
        /// RGB in `[0, 255]`.
        rgb: [f64; 3],
    },
    /// 3D checkerboard with cubic cells.
    Checker {
        /// Cell edge length in mm.
        cell_mm: f64,
        /// Colour of even cells.
        rgb_a: [f64; 3],
        /// Colour of odd cells.
        rgb_b: [f64; 3],
    },
    /// Rectangular fine checker patch on an arbitrary plane, a solid base
    /// colour elsewhere.
    Decal {
        /// World position of the patch's corner cell.
        origin: Vec3,
        /// Direction of patch rows; need not be unit length.
        u_dir: Vec3,
        /// Direction of patch columns; need not be unit length.
        v_dir: Vec3,
        /// Patch extent along `u_dir`, in mm.
        width_mm: f64,
        /// Patch extent along `v_dir`, in mm.
        height_mm: f64,
        /// Checker cell edge inside the patch, in mm.
        cell_mm: f64,
        /// Colour of even patch cells.
        fg: [f64; 3],
        /// Colour of odd patch cells.
        bg: [f64; 3],
        /// Colour outside the patch.
        base: [f64; 3],
    },
}

impl AlbedoPattern {
    /// Colour of the pattern at a world point.
    pub fn color_at(&self, p: Vec3) -> [f64; 3] {
        match self {
            AlbedoPattern::Solid { rgb } => *rgb,
            AlbedoPattern::Checker { cell_mm, rgb_a, rgb_b } => {
                let parity = (p.x / cell_mm).floor() + (p.y / cell_mm).floor()
                    + (p.z / cell_mm).floor();
                if (parity as i64) % 2 == 0 {
                    *rgb_a
                } else {
                    *rgb_b
                }
            }
            AlbedoPattern::Decal {
                origin,
                u_dir,
                v_dir,
                width_mm,
                height_mm,
                cell_mm,
                fg,
                bg,
                base,
            } => {
                let q = p - origin;
                let s = q.dot(&u_dir.normalize());
                let t = q.dot(&v_dir.normalize());
                if s >= 0.0 && s < *width_mm && t >= 0.0 && t < *height_mm {
                    let parity = (s / cell_mm).floor() + (t / cell_mm).floor();
                    if (parity as i64) % 2 == 0 {
                        *fg
                    } else {
                        *bg
                    }
                } else {
                    *base
                }
            }
        }
    }
}

/// A shape with its surface colouring.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    /// The solid.
    pub shape: Shape,
    /// Its surface pattern.
    pub albedo: AlbedoPattern,
}

/// Union of analytic solids.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    /// The solids; colour queries resolve to the closest one.
    pub objects: Vec<SceneObject>,
}

impl AnalyticScene {
    /// Signed distance of the scene union at a world point.
    pub fn sdf(&self, p: Vec3) -> f64 {
        self.objects
            .iter()
            .map(|o| o.shape.sdf(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Albedo at a world point, taken from the nearest object. Ties prefer
    /// the earlier object.
    pub fn albedo(&self, p: Vec3) -> [f64; 3] {
        let mut best = (f64::INFINITY, 0usize);
        for (i, o) in self.objects.iter().enumerate() {
            let d = o.shape.sdf(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        self.objects
            .get(best.1)
            .map(|o| o.albedo.color_at(p))
            .unwrap_or(BACKGROUND_COLOR)
    }

    /// Marches a world-space ray and returns the hit point, if any.
    pub fn trace(&self, origin: Vec3, dir: Vec3) -> Option<Vec3> {
        let mut t = 0.0;
        for _ in 0..TRACE_MAX_STEPS {
            let p = origin + dir * t;
            let d = self.sdf(p);
            if d < TRACE_EPSILON {
                return Some(p);
            }
            t += d;
            if t > TRACE_MAX_RANGE {
                return None;
            }
        }
        None
    }
}

/// Sensor noise injected by [`render_sequence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Standard deviation of additive depth noise, in mm.
    pub depth_sigma_mm: f64,
    /// Standard deviation of translation error between the recorded and
    /// the physically rendered camera position, in mm.
    pub pose_jitter_mm: f64,
    /// Seed for the noise stream.
    pub seed: u64,
}

/// Camera path with optional capture noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// World-to-camera transform per frame.
    pub poses: Vec<RigidTransform>,
    /// Noise applied when rendering the sequence.
    pub noise: Option<NoiseParams>,
}

impl Trajectory {
    /// Number of frames on the path.
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    /// Whether the path is empty.
    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Builds a circular camera path around a point.
///
/// Cameras sit on a ring of the given radius, raised by `elevation_deg`
/// above the orbit plane, all looking at `center`. Frame 0 starts in front
/// of the center (along -z in world coordinates) and frames advance
/// counter-clockwise seen from above.
pub fn orbit_trajectory(
    center: Vec3,
    radius_mm: f64,
    n_frames: u32,
    elevation_deg: f64,
) -> Result<Trajectory> {
    if n_frames == 0 {
        return Err(Error::InvalidConfig("orbit needs at least one frame".into()));
    }
    if !(radius_mm.is_finite() && radius_mm > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "orbit radius must be positive, got {radius_mm}"
        )));
    }
    if !elevation_deg.is_finite() || elevation_deg.abs() >= 89.0 {
        return Err(Error::InvalidConfig(format!(
            "orbit elevation must stay below 89 degrees, got {elevation_deg}"
        )));
    }
    let elev = elevation_deg.to_radians();
    let mut poses = Vec::with_capacity(n_frames as usize);
    for k in 0..n_frames {
        let az = 2.0 * std::f64::consts::PI * f64::from(k) / f64::from(n_frames);
        // world y points down, so positive elevation moves the camera to
        // negative y
        let eye = center
            + radius_mm
                * Vec3::new(elev.cos() * az.sin(), -elev.sin(), -elev.cos() * az.cos());
        poses.push(look_at(eye, center, Vec3::new(0.0, 1.0, 0.0))?);
    }
    Ok(Trajectory { poses, noise: None })
}

/// Renders one noise-free RGB-D frame.
///
/// `pose` maps world coordinates to the depth camera; the colour camera
/// pose follows from the rig calibration. The returned frame records
/// exactly this pose, so fusing it alone treats the world frame as the
/// fusion frame. Depth pixels where the ray misses or fails to converge
/// are invalid (zero).
pub fn render_frame(
    scene: &AnalyticScene,
    pose: &RigidTransform,
    calib: &RgbdCalibration,
) -> Result<Frame> {
    let depth = render_depth(scene, pose, &calib.depth);
    let hd_pose = calib.depth_to_hd.compose(pose);
    let hd = render_color(scene, &hd_pose, &calib.hd);
    Ok(Frame {
        index: 0,
        depth,
        hd,
        pose: *pose,
    })
}

/// Renders an RGB-D sequence along a trajectory, re-based so that frame
/// zero's camera is the fusion frame.
///
/// Every returned frame's pose maps frame zero's depth camera space to its
/// own depth camera space. With noise configured, depth rasters receive
/// additive Gaussian noise and the rendered camera position is jittered
/// around the recorded pose; both streams are reproducible from the seed.
pub fn render_sequence(
    scene: &AnalyticScene,
    traj: &Trajectory,
    calib: &RgbdCalibration,
) -> Result<Vec<Frame>> {
    if traj.is_empty() {
        return Err(Error::InvalidConfig("trajectory has no frames".into()));
    }
    let first_inv = traj.poses[0].inverse();
    let mut frames = Vec::with_capacity(traj.len());
    for (k, pose) in traj.poses.iter().enumerate() {
        let mut rng = traj
            .noise
            .map(|n| ChaCha8Rng::seed_from_u64(n.seed.wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(k as u64 + 1))));
        let render_pose = match (&traj.noise, &mut rng) {
            (Some(n), Some(rng)) if n.pose_jitter_mm > 0.0 => {
                let normal = Normal::new(0.0, n.pose_jitter_mm)
                    .map_err(|e| Error::InvalidConfig(format!("pose jitter: {e}")))?;
                let dt = Vec3::new(
                    normal.sample(rng),
                    normal.sample(rng),
                    normal.sample(rng),
                );
                RigidTransform {
                    rotation: pose.rotation,
                    translation: pose.translation + dt,
                }
            }
            _ => *pose,
        };
        let mut frame = render_frame(scene, &render_pose, calib)?;
        if let (Some(n), Some(rng)) = (&traj.noise, &mut rng) {
            if n.depth_sigma_mm > 0.0 {
                let normal = Normal::new(0.0, n.depth_sigma_mm)
                    .map_err(|e| Error::InvalidConfig(format!("depth noise: {e}")))?;
                for d in frame.depth.data.iter_mut() {
                    if *d > 0.0 {
                        let noisy = f64::from(*d) + normal.sample(rng);
                        *d = if noisy > 0.0 { noisy as f32 } else { 0.0 };
                    }
                }
            }
        }
        frame.index = k as u32;
        frame.pose = pose.compose(&first_inv);
        frames.push(frame);
    }
    Ok(frames)
}

/// Sphere traces a depth raster from a camera.
fn render_depth(scene: &AnalyticScene, pose: &RigidTransform, intr: &CameraIntrinsics) -> DepthMap {
    let cam_to_world = pose.inverse();
    let origin = cam_to_world.translation;
    let mut map = DepthMap::new(intr.width, intr.height).expect("validated intrinsics");
    let width = intr.width as usize;
    map.data
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let dir_cam = intr
                    .unproject(x as f64, y as f64, 1.0)
                    .expect("unit depth is valid")
                    .normalize();
                let dir = cam_to_world.transform_vector(dir_cam);
                *out = match scene.trace(origin, dir) {
                    Some(hit) => {
                        let z = pose.transform_point(hit).z;
                        if z > 0.0 {
                            z as f32
                        } else {
                            0.0
                        }
                    }
                    None => 0.0,
                };
            }
        });
    map
}

/// Sphere traces a colour raster from a camera.
fn render_color(scene: &AnalyticScene, pose: &RigidTransform, intr: &CameraIntrinsics) -> RgbRaster {
    let cam_to_world = pose.inverse();
    let origin = cam_to_world.translation;
    let mut img = RgbRaster::new(intr.width, intr.height).expect("validated intrinsics");
    let row_bytes = 3 * intr.width as usize;
    img.data
        .par_chunks_mut(row_bytes)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..intr.width as usize {
                let dir_cam = intr
                    .unproject(x as f64, y as f64, 1.0)
                    .expect("unit depth is valid")
                    .normalize();
                let dir = cam_to_world.transform_vector(dir_cam);
                let rgb = match scene.trace(origin, dir) {
                    Some(hit) => scene.albedo(hit),
                    None => BACKGROUND_COLOR,
                };
                for c in 0..3 {
                    row[3 * x + c] = rgb[c].round().clamp(0.0, 255.0) as u8;
                }
            }
        });
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wall_scene(z: f64) -> AnalyticScene {
        AnalyticScene {
            objects: vec![SceneObject {
                shape: Shape::Plane {
                    normal: Vec3::new(0.0, 0.0, -1.0),
                    offset_mm: -z,
                },
                albedo: AlbedoPattern::Solid {
                    rgb: [200.0, 150.0, 100.0],
                },
            }],
        }
    }

    #[test]
    fn cuboid_sdf_is_exact() {
        let b = Shape::Cuboid {
            center: Vec3::zeros(),
            half_extents: Vec3::new(10.0, 20.0, 30.0),
        };
        assert_relative_eq!(b.sdf(Vec3::new(15.0, 0.0, 0.0)), 5.0, epsilon = 1e-12);
        assert_relative_eq!(b.sdf(Vec3::new(0.0, 0.0, 0.0)), -10.0, epsilon = 1e-12);
        assert_relative_eq!(
            b.sdf(Vec3::new(13.0, 24.0, 0.0)),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn frontal_wall_depth_matches_plane_distance() {
        let scene = wall_scene(800.0);
        let calib = RgbdCalibration::synthetic_default();
        let small = RgbdCalibration {
            hd: CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap(),
            ..calib
        };
        let frame = render_frame(&scene, &RigidTransform::identity(), &small).unwrap();
        let d = frame.depth.depth_at(320, 240).unwrap();
        assert!((d - 800.0).abs() < 0.1, "center depth {d}");
        // depth is the camera z coordinate, so a fronto-parallel wall is
        // flat across the whole raster
        let corner = frame.depth.depth_at(0, 0).unwrap();
        assert!((corner - 800.0).abs() < 0.1, "corner depth {corner}");
    }

    #[test]
    fn sphere_center_depth_is_distance_minus_radius() {
        let scene = AnalyticScene {
            objects: vec![SceneObject {
                shape: Shape::Sphere {
                    center: Vec3::new(0.0, 0.0, 600.0),
                    radius_mm: 150.0,
                },
                albedo: AlbedoPattern::Solid { rgb: [255.0; 3] },
            }],
        };
        let calib = RgbdCalibration::synthetic_default();
        let small = RgbdCalibration {
            hd: CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap(),
            ..calib
        };
        let frame = render_frame(&scene, &RigidTransform::identity(), &small).unwrap();
        let d = frame.depth.depth_at(320, 240).unwrap();
        assert!((d - 450.0).abs() < 0.1, "center depth {d}");
        // rays past the silhouette miss
        assert_eq!(frame.depth.depth_at(0, 0), None);
    }

    #[test]
    fn checker_flip_spacing_matches_projected_cell() {
        let cell = 40.0;
        let z = 600.0;
        let scene = AnalyticScene {
            objects: vec![SceneObject {
                shape: Shape::Plane {
                    normal: Vec3::new(0.0, 0.0, -1.0),
                    offset_mm: -z,
                },
                albedo: AlbedoPattern::Checker {
                    cell_mm: cell,
                    rgb_a: [255.0, 255.0, 255.0],
                    rgb_b: [0.0, 0.0, 0.0],
                },
            }],
        };
        let calib = RgbdCalibration::synthetic_default();
        let hd_pose = calib.depth_to_hd.compose(&RigidTransform::identity());
        let img = render_color(&scene, &hd_pose, &calib.hd);
        // walk the middle row and collect colour flip positions
        let y = calib.hd.height / 2;
        let mut flips = Vec::new();
        let mut prev = img.pixel(0, y);
        for x in 1..calib.hd.width {
            let c = img.pixel(x, y);
            if c != prev {
                flips.push(x);
                prev = c;
            }
        }
        assert!(flips.len() > 10);
        let expected = calib.hd.fx * cell / z;
        for pair in flips.windows(2) {
            let spacing = f64::from(pair[1] - pair[0]);
            assert!(
                (spacing - expected).abs() <= 2.0,
                "flip spacing {spacing} vs {expected}"
            );
        }
    }

    #[test]
    fn depth_and_hd_cameras_see_the_same_surface_point() {
        let scene = wall_scene(700.0);
        let calib = RgbdCalibration::synthetic_default();
        let frame = render_frame(&scene, &RigidTransform::identity(), &calib).unwrap();
        for (u, v) in [(200u32, 150u32), (320, 240), (500, 400)] {
            let d = frame.depth.depth_at(i64::from(u), i64::from(v)).unwrap();
            let (hu, hv) = calib
                .depth_pixel_to_hd_pixel(f64::from(u), f64::from(v), d)
                .unwrap();
            assert!(calib.hd.contains(hu, hv));
            let hit = calib.depth.unproject(f64::from(u), f64::from(v), d).unwrap();
            let expected = scene.albedo(hit);
            let got = frame.hd.sample_bilinear(hu, hv);
            for c in 0..3 {
                assert!(
                    (got[c] - expected[c]).abs() <= 1.0,
                    "channel {c}: {} vs {}",
                    got[c],
                    expected[c]
                );
            }
        }
    }

    #[test]
    fn orbit_cameras_circle_the_center_and_look_at_it() {
        let center = Vec3::new(50.0, -20.0, 800.0);
        let traj = orbit_trajectory(center, 500.0, 12, 15.0).unwrap();
        assert_eq!(traj.len(), 12);
        for pose in &traj.poses {
            let eye = pose.inverse().translation;
            assert_relative_eq!((eye - center).norm(), 500.0, epsilon = 1e-9);
            let c = pose.transform_point(center);
            assert_relative_eq!(c.x, 0.0, epsilon = 1e-9);
            assert_relative_eq!(c.y, 0.0, epsilon = 1e-9);
            assert_relative_eq!(c.z, 500.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn orbit_validation() {
        let c = Vec3::zeros();
        assert!(orbit_trajectory(c, 100.0, 0, 0.0).is_err());
        assert!(orbit_trajectory(c, 0.0, 5, 0.0).is_err());
        assert!(orbit_trajectory(c, 100.0, 5, 90.0).is_err());
    }

    #[test]
    fn sequence_rebases_poses_to_the_first_frame() {
        let scene = wall_scene(900.0);
        let calib = RgbdCalibration {
            depth: CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap(),
            hd: CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap(),
            depth_to_hd: RigidTransform::identity(),
        };
        let traj = orbit_trajectory(Vec3::new(0.0, 0.0, 900.0), 400.0, 4, 0.0).unwrap();
        let frames = render_sequence(&scene, &traj, &calib).unwrap();
        assert_eq!(frames.len(), 4);
        assert_relative_eq!(
            frames[0].pose.rotation,
            crate::geometry::Mat3::identity(),
            epsilon = 1e-9
        );
        assert_relative_eq!(frames[0].pose.translation, Vec3::zeros(), epsilon = 1e-9);
        // re-based pose equals current pose composed with the first inverse
        let expect = traj.poses[2].compose(&traj.poses[0].inverse());
        assert_relative_eq!(frames[2].pose.rotation, expect.rotation, epsilon = 1e-12);
    }

    #[test]
    fn depth_noise_is_reproducible_from_the_seed() {
        // a sphere keeps every orbit camera in empty space, unlike a
        // half-space wall
        let scene = AnalyticScene {
            objects: vec![SceneObject {
                shape: Shape::Sphere {
                    center: Vec3::new(0.0, 0.0, 700.0),
                    radius_mm: 150.0,
                },
                albedo: AlbedoPattern::Solid { rgb: [255.0; 3] },
            }],
        };
        let calib = RgbdCalibration {
            depth: CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap(),
            hd: CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap(),
            depth_to_hd: RigidTransform::identity(),
        };
        let mut traj = orbit_trajectory(Vec3::new(0.0, 0.0, 700.0), 300.0, 2, 0.0).unwrap();
        traj.noise = Some(NoiseParams {
            depth_sigma_mm: 2.0,
            pose_jitter_mm: 0.0,
            seed: 99,
        });
        let a = render_sequence(&scene, &traj, &calib).unwrap();
        let b = render_sequence(&scene, &traj, &calib).unwrap();
        assert_eq!(a[1].depth.data, b[1].depth.data);

        traj.noise = Some(NoiseParams {
            depth_sigma_mm: 2.0,
            pose_jitter_mm: 0.0,
            seed: 100,
        });
        let c = render_sequence(&scene, &traj, &calib).unwrap();
        assert_ne!(a[1].depth.data, c[1].depth.data);

        // noise stays near the clean surface
        let clean_traj = Trajectory {
            poses: traj.poses.clone(),
            noise: None,
        };
        let clean = render_sequence(&scene, &clean_traj, &calib).unwrap();
        let mut max_dev = 0.0f32;
        for (n, c) in a[0].depth.data.iter().zip(&clean[0].depth.data) {
            if *n > 0.0 && *c > 0.0 {
                max_dev = max_dev.max((n - c).abs());
            }
        }
        assert!(max_dev > 0.1 && max_dev < 20.0);
    }
}
