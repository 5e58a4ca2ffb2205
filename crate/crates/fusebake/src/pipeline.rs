//! End-to-end reconstruction runs and the frame store shared by the
//! command line stages.
//!
//! A pipeline run captures a synthetic scene, fuses it into volumes,
//! extracts and simplifies the surface, bakes the texture atlas, renders
//! snapshots of the atlas-textured and vertex-coloured results, and
//! scores both. Every stage leaves its artifact in the output directory,
//! so any stage can also be re-run in isolation via the stage commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{RgbdCalibration, Vec3};
use crate::io::{
    export_mesh_obj, export_textured_obj, load_calibration, load_pipeline, load_scene,
    read_depth_raster, read_ppm, read_trajectory, write_color_volume, write_depth_raster,
    write_ppm, write_trajectory, write_tsdf_volume,
};
use crate::mesh::{decimate, marching_cubes};
use crate::metrics::mean_gradient_magnitude;
use crate::render::{frame_mesh_camera, render_snapshot, SnapshotModel};
use crate::synth::{render_sequence, Trajectory};
use crate::texture::{colored_vertex_texture, texture_mesh};
use crate::volume::{ColorVolume, Frame, TsdfVolume, VolumeConfig};

/// Numbers summarizing one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Frames captured.
    pub frames: usize,
    /// Triangles in the extracted surface.
    pub full_triangles: usize,
    /// Triangles after simplification.
    pub decimated_triangles: usize,
    /// Atlas pages baked.
    pub atlas_pages: usize,
    /// Mean gradient magnitude of the atlas-textured snapshot.
    pub atlas_sharpness: f64,
    /// Mean gradient magnitude of the vertex-coloured snapshot.
    pub vertex_sharpness: f64,
}

impl PipelineReport {
    /// Renders the report as a small TOML document.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version = 1");
        let _ = writeln!(out, "frames = {}", self.frames);
        let _ = writeln!(out, "full_triangles = {}", self.full_triangles);
        let _ = writeln!(out, "decimated_triangles = {}", self.decimated_triangles);
        let _ = writeln!(out, "atlas_pages = {}", self.atlas_pages);
        let _ = writeln!(out, "atlas_sharpness = {}", self.atlas_sharpness);
        let _ = writeln!(out, "vertex_sharpness = {}", self.vertex_sharpness);
        out
    }
}

/// Writes a captured sequence into a directory: `depth_NNNN.fbdp` and
/// `hd_NNNN.ppm` per frame plus `trajectory.fbtraj` with the recorded
/// poses.
pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let poses: Vec<_> = frames.iter().map(|f| f.pose).collect();
    write_trajectory(&dir.join("trajectory.fbtraj"), &poses)?;
    for (k, frame) in frames.iter().enumerate() {
        write_depth_raster(&dir.join(format!("depth_{k:04}.fbdp")), &frame.depth)?;
        write_ppm(&dir.join(format!("hd_{k:04}.ppm")), &frame.hd)?;
    }
    Ok(())
}

/// Reads a sequence written by [`write_frames`].
pub fn read_frames(dir: &Path) -> Result<Vec<Frame>> {
    let poses = read_trajectory(&dir.join("trajectory.fbtraj"))?;
    if poses.is_empty() {
        return Err(Error::format(
            dir.display().to_string(),
            "trajectory contains no frames",
        ));
    }
    let mut frames = Vec::with_capacity(poses.len());
    for (k, pose) in poses.into_iter().enumerate() {
        frames.push(Frame {
            index: k as u32,
            depth: read_depth_raster(&dir.join(format!("depth_{k:04}.fbdp")))?,
            hd: read_ppm(&dir.join(format!("hd_{k:04}.ppm")))?,
            pose,
        });
    }
    Ok(frames)
}

/// Fuses a captured sequence into fresh geometry and colour volumes.
pub fn fuse_frames(
    frames: &[Frame],
    calib: &RgbdCalibration,
    config: &VolumeConfig,
) -> Result<(TsdfVolume, ColorVolume)> {
    if frames.is_empty() {
        return Err(Error::InvalidConfig("no frames to fuse".into()));
    }
    let mut tsdf = TsdfVolume::new(config.clone())?;
    let mut color = ColorVolume::new(config.clone())?;
    for frame in frames {
        tsdf.integrate_depth(frame, &calib.depth)?;
        color.integrate_color(frame, calib, &frame.pose)?;
    }
    Ok((tsdf, color))
}

/// Where the orbit center lands in the fusion frame: the first camera of
/// the trajectory defines that frame, so the point all cameras look at
/// sits straight ahead of it.
pub fn fusion_frame_center(traj: &Trajectory, orbit_center: Vec3) -> Result<Vec3> {
    let first = traj
        .poses
        .first()
        .ok_or_else(|| Error::InvalidConfig("trajectory has no frames".into()))?;
    Ok(first.transform_point(orbit_center))
}

/// Runs every stage of a pipeline file and writes all artifacts under
/// `out_dir`.
///
/// Layout: `frames/` with the capture, `volume/geometry.fbvg` and
/// `volume/color.fbvc`, `mesh/full.obj`, `mesh/model.obj` (textured, with
/// its MTL and pages), `mesh/model_vertex.obj` (vertex colours),
/// `snapshots/atlas.ppm` and `snapshots/vertex.ppm`, and `report.toml`.
pub fn run_pipeline(pipeline_path: &Path, out_dir: &Path) -> Result<PipelineReport> {
    let file = load_pipeline(pipeline_path)?;
    let base = pipeline_path.parent().unwrap_or(Path::new(""));
    let scene_file = load_scene(&resolve(base, &file.scene))?;
    let calib = load_calibration(&resolve(base, &file.calibration))?;

    // capture
    let scene = scene_file.to_scene()?;
    let traj = scene_file.to_trajectory()?;
    let frames = render_sequence(&scene, &traj, &calib)?;
    write_frames(&out_dir.join("frames"), &frames)?;

    // fuse
    let center = fusion_frame_center(&traj, vec3(scene_file.trajectory.center))?;
    let config = file.volume.to_config(center)?;
    let (tsdf, color) = fuse_frames(&frames, &calib, &config)?;
    drop(frames);
    let volume_dir = out_dir.join("volume");
    std::fs::create_dir_all(&volume_dir)?;
    write_tsdf_volume(&volume_dir.join("geometry.fbvg"), &tsdf)?;
    write_color_volume(&volume_dir.join("color.fbvc"), &color)?;

    // surface
    let full = marching_cubes(&tsdf, 0.0)?;
    drop(tsdf);
    let mesh_dir = out_dir.join("mesh");
    std::fs::create_dir_all(&mesh_dir)?;
    let simplified = decimate(&full, file.decimate_rate)?;

    // texture both ways
    let textured = texture_mesh(
        &simplified,
        &color,
        file.texture.pixel_size_mm,
        file.texture.page_edge,
    )?;
    let vertex_colored = colored_vertex_texture(&simplified, &color)?;
    drop(color);
    export_mesh_obj(&mesh_dir.join("full.obj"), &full)?;
    export_textured_obj(&mesh_dir.join("model.obj"), &textured)?;
    export_mesh_obj(&mesh_dir.join("model_vertex.obj"), &vertex_colored)?;

    // snapshot and score
    let intr = file.snapshot.to_intrinsics()?;
    let direction = vec3(file.snapshot.direction);
    let pose = frame_mesh_camera(&simplified, direction, &intr)?;
    let snap_dir = out_dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    let atlas_snap = render_snapshot(
        &SnapshotModel::Atlas(&textured),
        &pose,
        &intr,
        file.snapshot.background,
    )?;
    let vertex_snap = render_snapshot(
        &SnapshotModel::VertexColors(&vertex_colored),
        &pose,
        &intr,
        file.snapshot.background,
    )?;
    write_ppm(&snap_dir.join("atlas.ppm"), &atlas_snap)?;
    write_ppm(&snap_dir.join("vertex.ppm"), &vertex_snap)?;

    let report = PipelineReport {
        frames: traj.len(),
        full_triangles: full.triangles.len(),
        decimated_triangles: simplified.triangles.len(),
        atlas_pages: textured.atlas.pages.len(),
        atlas_sharpness: mean_gradient_magnitude(&atlas_snap)?,
        vertex_sharpness: mean_gradient_magnitude(&vertex_snap)?,
    };
    std::fs::write(out_dir.join("report.toml"), report.to_toml_string())?;
    Ok(report)
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::synth::orbit_trajectory;

    #[test]
    fn frame_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let calib = RgbdCalibration {
            depth: crate::geometry::CameraIntrinsics::new(80.0, 80.0, 31.5, 23.5, 64, 48)
                .unwrap(),
            hd: crate::geometry::CameraIntrinsics::new(160.0, 160.0, 63.5, 47.5, 128, 96)
                .unwrap(),
            depth_to_hd: RigidTransform::identity(),
        };
        let scene = crate::synth::AnalyticScene {
            objects: vec![crate::synth::SceneObject {
                shape: crate::synth::Shape::Sphere {
                    center: Vec3::new(0.0, 0.0, 500.0),
                    radius_mm: 120.0,
                },
                albedo: crate::synth::AlbedoPattern::Solid {
                    rgb: [210.0, 90.0, 40.0],
                },
            }],
        };
        let traj = orbit_trajectory(Vec3::new(0.0, 0.0, 500.0), 400.0, 3, 10.0).unwrap();
        let frames = render_sequence(&scene, &traj, &calib).unwrap();
        write_frames(dir.path(), &frames).unwrap();
        let back = read_frames(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in frames.iter().zip(&back) {
            assert_eq!(a.hd.data, b.hd.data);
            assert_eq!(a.pose.rotation, b.pose.rotation);
            // depth survives up to millimetre quantization
            for (da, db) in a.depth.data.iter().zip(&b.depth.data) {
                assert!((da - db).abs() <= 0.5, "{da} vs {db}");
            }
        }
    }

    #[test]
    fn fusion_center_is_ahead_of_the_first_camera() {
        let center = Vec3::new(40.0, -10.0, 900.0);
        let traj = orbit_trajectory(center, 650.0, 6, 25.0).unwrap();
        let c = fusion_frame_center(&traj, center).unwrap();
        assert!((c.x).abs() < 1e-9);
        assert!((c.y).abs() < 1e-9);
        assert!((c.z - 650.0).abs() < 1e-9);
    }
}
