//! TOML configuration files for rigs, scenes, and pipeline runs.
//!
//! All files carry a `version` field (currently 1) and reject unknown
//! keys, so typos fail loudly instead of silently falling back to
//! defaults. Loaders return validated runtime types, not raw specs.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Mat3, RgbdCalibration, RigidTransform, Vec3};
use crate::synth::{
    AlbedoPattern, AnalyticScene, NoiseParams, SceneObject, Shape, Trajectory,
};
use crate::volume::VolumeConfig;

const SUPPORTED_VERSION: u32 = 1;

/// Camera pair calibration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    /// Format version, currently 1.
    pub version: u32,
    /// Depth camera intrinsics.
    pub depth: IntrinsicsSpec,
    /// High resolution colour camera intrinsics.
    pub hd: IntrinsicsSpec,
    /// Transform from depth camera space to colour camera space.
    pub depth_to_hd: TransformSpec,
}

/// Pinhole intrinsics as stored on disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsSpec {
    /// Focal length in pixels, x.
    pub fx: f64,
    /// Focal length in pixels, y.
    pub fy: f64,
    /// Principal point x in pixels.
    pub cx: f64,
    /// Principal point y in pixels.
    pub cy: f64,
    /// Image width in pixels.
    pub width: u32,
    /// Image height in pixels.
    pub height: u32,
}

/// Rigid transform as stored on disk: row-major rotation plus translation
/// in mm.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    /// Rotation matrix rows.
    pub rotation: [[f64; 3]; 3],
    /// Translation vector.
    pub translation: [f64; 3],
}

/// Synthetic scene description plus the capture trajectory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    /// Format version, currently 1.
    pub version: u32,
    /// The solids in the scene.
    pub objects: Vec<ObjectSpec>,
    /// Camera orbit to capture it with.
    pub trajectory: OrbitSpec,
}

/// One scene solid with its surface colouring.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// The solid.
    pub shape: ShapeSpec,
    /// Its surface pattern.
    pub albedo: AlbedoSpec,
}

/// Shape kinds; one of `[objects.shape.sphere]`,
/// `[objects.shape.cuboid]`, or `[objects.shape.plane]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    /// Sphere by center and radius.
    Sphere {
        /// Center, mm.
        center: [f64; 3],
        /// Radius, mm.
        radius_mm: f64,
    },
    /// Axis-aligned box by center and half edge lengths.
    Cuboid {
        /// Center, mm.
        center: [f64; 3],
        /// Half edge lengths, mm.
        half_extents: [f64; 3],
    },
    /// Half-space by outward normal and offset.
    Plane {
        /// Outward normal; normalized on load.
        normal: [f64; 3],
        /// Signed offset along the normal, mm.
        offset_mm: f64,
    },
}

/// Albedo kinds; one of `[objects.albedo.solid]`,
/// `[objects.albedo.checker]`, or `[objects.albedo.decal]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AlbedoSpec {
    /// One colour everywhere.
    Solid {
        /// RGB in 0..=255.
        rgb: [f64; 3],
    },
    /// 3D checkerboard.
    Checker {
        /// Cell edge, mm.
        cell_mm: f64,
        /// Even cell colour.
        rgb_a: [f64; 3],
        /// Odd cell colour.
        rgb_b: [f64; 3],
    },
    /// Fine checker patch on a plane over a base colour.
    Decal {
        /// Patch corner, mm.
        origin: [f64; 3],
        /// Row direction.
        u_dir: [f64; 3],
        /// Column direction.
        v_dir: [f64; 3],
        /// Patch width, mm.
        width_mm: f64,
        /// Patch height, mm.
        height_mm: f64,
        /// Checker cell edge, mm.
        cell_mm: f64,
        /// Even cell colour.
        fg: [f64; 3],
        /// Odd cell colour.
        bg: [f64; 3],
        /// Colour outside the patch.
        base: [f64; 3],
    },
}

/// Circular capture path.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSpec {
    /// Point all cameras look at, mm.
    pub center: [f64; 3],
    /// Orbit radius, mm.
    pub radius_mm: f64,
    /// Number of frames.
    pub frames: u32,
    /// Camera elevation above the orbit plane, degrees.
    #[serde(default)]
    pub elevation_deg: f64,
    /// Optional sensor noise.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

/// Capture noise parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Depth noise standard deviation, mm.
    #[serde(default)]
    pub depth_sigma_mm: f64,
    /// Camera position jitter standard deviation, mm.
    #[serde(default)]
    pub pose_jitter_mm: f64,
    /// Noise stream seed.
    pub seed: u64,
}

/// End-to-end pipeline run description.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineFile {
    /// Format version, currently 1.
    pub version: u32,
    /// Scene file path, relative to this file.
    pub scene: String,
    /// Calibration file path, relative to this file.
    pub calibration: String,
    /// Fusion volume placement and resolution.
    pub volume: VolumeSpec,
    /// Fraction of triangles to keep when simplifying.
    pub decimate_rate: f64,
    /// Texture baking parameters.
    pub texture: TextureSpec,
    /// Snapshot rendering parameters.
    pub snapshot: SnapshotSpec,
}

/// Fusion volume parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSpec {
    /// Geometry grid voxels per edge.
    pub geo_dim: u32,
    /// Colour grid voxels per edge.
    pub color_dim: u32,
    /// Cube edge length, mm.
    pub size_mm: f64,
    /// Cube center in the fusion frame; defaults to where the first
    /// camera sees the orbit center.
    #[serde(default)]
    pub center: Option<[f64; 3]>,
}

/// Texture baking parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureSpec {
    /// Texture sample spacing on the surface, mm.
    pub pixel_size_mm: f64,
    /// Atlas page edge length, texels.
    pub page_edge: u32,
}

/// Snapshot rendering parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSpec {
    /// Snapshot width, pixels.
    pub width: u32,
    /// Snapshot height, pixels.
    pub height: u32,
    /// Focal length in pixels; defaults to the snapshot width.
    #[serde(default)]
    pub focal: Option<f64>,
    /// View direction toward the model.
    #[serde(default = "default_direction")]
    pub direction: [f64; 3],
    /// Background colour.
    #[serde(default = "default_background")]
    pub background: [u8; 3],
}

fn default_direction() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_background() -> [u8; 3] {
    [30, 30, 30]
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn check_rgb(rgb: [f64; 3], what: &str) -> Result<()> {
    for c in rgb {
        if !(0.0..=255.0).contains(&c) {
            return Err(Error::InvalidConfig(format!(
                "{what} colour channel {c} outside 0..=255"
            )));
        }
    }
    Ok(())
}

impl IntrinsicsSpec {
    /// Builds validated intrinsics.
    pub fn to_intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

impl TransformSpec {
    /// Builds a validated rigid transform.
    pub fn to_transform(&self) -> Result<RigidTransform> {
        let rotation = Mat3::from_row_slice(&[
            self.rotation[0][0],
            self.rotation[0][1],
            self.rotation[0][2],
            self.rotation[1][0],
            self.rotation[1][1],
            self.rotation[1][2],
            self.rotation[2][0],
            self.rotation[2][1],
            self.rotation[2][2],
        ]);
        RigidTransform::new(rotation, vec3(self.translation))
    }
}

impl CalibrationFile {
    /// Builds the validated calibration.
    pub fn to_calibration(&self) -> Result<RgbdCalibration> {
        Ok(RgbdCalibration {
            depth: self.depth.to_intrinsics()?,
            hd: self.hd.to_intrinsics()?,
            depth_to_hd: self.depth_to_hd.to_transform()?,
        })
    }
}

impl ShapeSpec {
    /// Builds the validated shape.
    pub fn to_shape(&self) -> Result<Shape> {
        match self {
            ShapeSpec::Sphere { center, radius_mm } => {
                if !(radius_mm.is_finite() && *radius_mm > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "sphere radius must be positive, got {radius_mm}"
                    )));
                }
                Ok(Shape::Sphere {
                    center: vec3(*center),
                    radius_mm: *radius_mm,
                })
            }
            ShapeSpec::Cuboid {
                center,
                half_extents,
            } => {
                if half_extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "cuboid half extents must be positive, got {half_extents:?}"
                    )));
                }
                Ok(Shape::Cuboid {
                    center: vec3(*center),
                    half_extents: vec3(*half_extents),
                })
            }
            ShapeSpec::Plane { normal, offset_mm } => {
                let n = vec3(*normal).try_normalize(1e-9).ok_or_else(|| {
                    Error::InvalidConfig("plane normal must be nonzero".into())
                })?;
                Ok(Shape::Plane {
                    normal: n,
                    offset_mm: *offset_mm,
                })
            }
        }
    }
}

impl AlbedoSpec {
    /// Builds the validated albedo pattern.
    pub fn to_albedo(&self) -> Result<AlbedoPattern> {
        match self {
            AlbedoSpec::Solid { rgb } => {
                check_rgb(*rgb, "solid")?;
                Ok(AlbedoPattern::Solid { rgb: *rgb })
            }
            AlbedoSpec::Checker {
                cell_mm,
                rgb_a,
                rgb_b,
            } => {
                if !(cell_mm.is_finite() && *cell_mm > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "checker cell must be positive, got {cell_mm}"
                    )));
                }
                check_rgb(*rgb_a, "checker")?;
                check_rgb(*rgb_b, "checker")?;
                Ok(AlbedoPattern::Checker {
                    cell_mm: *cell_mm,
                    rgb_a: *rgb_a,
                    rgb_b: *rgb_b,
                })
            }
            AlbedoSpec::Decal {
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
                for (name, value) in [
                    ("width", width_mm),
                    ("height", height_mm),
                    ("cell", cell_mm),
                ] {
                    if !(value.is_finite() && *value > 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "decal {name} must be positive, got {value}"
                        )));
                    }
                }
                for (name, dir) in [("u_dir", u_dir), ("v_dir", v_dir)] {
                    if vec3(*dir).norm() < 1e-9 {
                        return Err(Error::InvalidConfig(format!(
                            "decal {name} must be nonzero"
                        )));
                    }
                }
                check_rgb(*fg, "decal")?;
                check_rgb(*bg, "decal")?;
                check_rgb(*base, "decal")?;
                Ok(AlbedoPattern::Decal {
                    origin: vec3(*origin),
                    u_dir: vec3(*u_dir),
                    v_dir: vec3(*v_dir),
                    width_mm: *width_mm,
                    height_mm: *height_mm,
                    cell_mm: *cell_mm,
                    fg: *fg,
                    bg: *bg,
                    base: *base,
                })
            }
        }
    }
}

impl SceneFile {
    /// Builds the validated scene.
    pub fn to_scene(&self) -> Result<AnalyticScene> {
        if self.objects.is_empty() {
            return Err(Error::InvalidConfig("scene has no objects".into()));
        }
        let objects = self
            .objects
            .iter()
            .map(|o| {
                Ok(SceneObject {
                    shape: o.shape.to_shape()?,
                    albedo: o.albedo.to_albedo()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnalyticScene { objects })
    }

    /// Builds the validated capture trajectory.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let orbit = &self.trajectory;
        let mut traj = crate::synth::orbit_trajectory(
            vec3(orbit.center),
            orbit.radius_mm,
            orbit.frames,
            orbit.elevation_deg,
        )?;
        traj.noise = orbit.noise.as_ref().map(|n| NoiseParams {
            depth_sigma_mm: n.depth_sigma_mm,
            pose_jitter_mm: n.pose_jitter_mm,
            seed: n.seed,
        });
        if let Some(n) = &traj.noise {
            if n.depth_sigma_mm < 0.0 || n.pose_jitter_mm < 0.0 {
                return Err(Error::InvalidConfig(
                    "noise standard deviations must not be negative".into(),
                ));
            }
        }
        Ok(traj)
    }
}

impl VolumeSpec {
    /// Builds the validated volume config, centering the cube at
    /// `default_center` when no explicit center is given.
    pub fn to_config(&self, default_center: Vec3) -> Result<VolumeConfig> {
        let center = self.center.map(vec3).unwrap_or(default_center);
        let origin = center - Vec3::from_element(self.size_mm / 2.0);
        VolumeConfig::new(self.geo_dim, self.color_dim, self.size_mm, origin)
    }
}

impl SnapshotSpec {
    /// Builds the snapshot camera intrinsics.
    pub fn to_intrinsics(&self) -> Result<CameraIntrinsics> {
        let focal = self.focal.unwrap_or(f64::from(self.width));
        CameraIntrinsics::new(
            focal,
            focal,
            (f64::from(self.width) - 1.0) / 2.0,
            (f64::from(self.height) - 1.0) / 2.0,
            self.width,
            self.height,
        )
    }
}

fn parse_file<T: serde::de::DeserializeOwned>(path: &Path, version: impl Fn(&T) -> u32) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let parsed: T = toml::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.message()))?;
    let v = version(&parsed);
    if v != SUPPORTED_VERSION {
        return Err(Error::format(
            path.display().to_string(),
            format!("unsupported version {v}, expected {SUPPORTED_VERSION}"),
        ));
    }
    Ok(parsed)
}

/// Loads and validates a calibration file.
pub fn load_calibration(path: &Path) -> Result<RgbdCalibration> {
    parse_file::<CalibrationFile>(path, |f| f.version)?.to_calibration()
}

/// Loads a scene file. Conversion to runtime types happens via
/// [`SceneFile::to_scene`] and [`SceneFile::to_trajectory`].
pub fn load_scene(path: &Path) -> Result<SceneFile> {
    let file = parse_file::<SceneFile>(path, |f| f.version)?;
    // validate eagerly so a bad file fails at load time
    file.to_scene()?;
    file.to_trajectory()?;
    Ok(file)
}

/// Loads a pipeline file. Referenced scene and calibration paths are
/// resolved relative to the pipeline file by the pipeline runner.
pub fn load_pipeline(path: &Path) -> Result<PipelineFile> {
    let file = parse_file::<PipelineFile>(path, |f| f.version)?;
    if !(file.decimate_rate.is_finite() && 0.0 < file.decimate_rate && file.decimate_rate <= 1.0)
    {
        return Err(Error::format(
            path.display().to_string(),
            format!("decimate_rate {} outside (0, 1]", file.decimate_rate),
        ));
    }
    file.snapshot.to_intrinsics()?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    const CALIB: &str = r#"
version = 1

[depth]
fx = 525.0
fy = 525.0
cx = 319.5
cy = 239.5
width = 640
height = 480

[hd]
fx = 1680.0
fy = 1680.0
cx = 1023.5
cy = 767.5
width = 2048
height = 1536

[depth_to_hd]
rotation = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
translation = [25.0, 0.0, 0.0]
"#;

    #[test]
    fn calibration_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "calib.toml", CALIB);
        let calib = load_calibration(&path).unwrap();
        assert_eq!(calib.depth.width, 640);
        assert_eq!(calib.hd.fx, 1680.0);
        assert_eq!(calib.depth_to_hd.translation.x, 25.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "calib.toml",
            &CALIB.replace("fx = 525.0", "fx = 525.0\nzoom = 2"),
        );
        let err = load_calibration(&path).unwrap_err();
        assert!(err.to_string().contains("calib.toml"), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "calib.toml", &CALIB.replace("version = 1", "version = 3"));
        assert!(load_calibration(&path).is_err());
    }

    const SCENE: &str = r#"
version = 1

[[objects]]
[objects.shape.sphere]
center = [0.0, 0.0, 800.0]
radius_mm = 150.0
[objects.albedo.checker]
cell_mm = 50.0
rgb_a = [255.0, 255.0, 255.0]
rgb_b = [30.0, 30.0, 30.0]

[[objects]]
[objects.shape.plane]
normal = [0.0, -2.0, 0.0]
offset_mm = -300.0
[objects.albedo.solid]
rgb = [120.0, 120.0, 140.0]

[trajectory]
center = [0.0, 0.0, 800.0]
radius_mm = 600.0
frames = 8
elevation_deg = 20.0

[trajectory.noise]
depth_sigma_mm = 1.5
seed = 11
"#;

    #[test]
    fn scene_loads_and_converts() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "scene.toml", SCENE);
        let file = load_scene(&path).unwrap();
        let scene = file.to_scene().unwrap();
        assert_eq!(scene.objects.len(), 2);
        // the plane normal was normalized
        match &scene.objects[1].shape {
            Shape::Plane { normal, .. } => {
                assert!((normal.norm() - 1.0).abs() < 1e-12);
                assert_eq!(normal.y, -1.0);
            }
            other => panic!("unexpected shape {other:?}"),
        }
        let traj = file.to_trajectory().unwrap();
        assert_eq!(traj.len(), 8);
        let noise = traj.noise.unwrap();
        assert_eq!(noise.seed, 11);
        assert_eq!(noise.pose_jitter_mm, 0.0);
    }

    #[test]
    fn bad_scene_values_fail_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "scene.toml",
            &SCENE.replace("radius_mm = 150.0", "radius_mm = -5.0"),
        );
        assert!(load_scene(&path).is_err());
    }

    const PIPELINE: &str = r#"
version = 1
scene = "scene.toml"
calibration = "calib.toml"
decimate_rate = 0.1

[volume]
geo_dim = 64
color_dim = 128
size_mm = 900.0

[texture]
pixel_size_mm = 3.0
page_edge = 512

[snapshot]
width = 640
height = 480
"#;

    #[test]
    fn pipeline_loads_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "run.toml", PIPELINE);
        let file = load_pipeline(&path).unwrap();
        assert_eq!(file.volume.geo_dim, 64);
        assert_eq!(file.volume.center, None);
        assert_eq!(file.snapshot.direction, [0.0, 0.0, 1.0]);
        assert_eq!(file.snapshot.background, [30, 30, 30]);
        let config = file
            .volume
            .to_config(Vec3::new(0.0, 0.0, 600.0))
            .unwrap();
        assert_eq!(config.origin, Vec3::new(-450.0, -450.0, 150.0));
        let intr = file.snapshot.to_intrinsics().unwrap();
        assert_eq!(intr.fx, 640.0);
        assert_eq!(intr.cx, 319.5);
    }

    #[test]
    fn out_of_range_rate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "run.toml",
            &PIPELINE.replace("decimate_rate = 0.1", "decimate_rate = 1.5"),
        );
        assert!(load_pipeline(&path).is_err());
    }
}
