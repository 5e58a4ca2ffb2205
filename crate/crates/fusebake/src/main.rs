//! Command line interface over the reconstruction pipeline stages.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fusebake::geometry::Vec3;
use fusebake::io::{
    export_mesh_obj, export_textured_obj, import_mesh_obj, import_textured_obj,
    load_calibration, load_scene, read_color_volume, read_ppm, read_tsdf_volume,
    write_color_volume, write_ppm, write_tsdf_volume,
};
use fusebake::mesh::{decimate, marching_cubes};
use fusebake::metrics::mean_gradient_magnitude;
use fusebake::pipeline::{fuse_frames, read_frames, write_frames};
use fusebake::render::{frame_mesh_camera, render_snapshot, SnapshotModel};
use fusebake::synth::render_sequence;
use fusebake::texture::texture_mesh;
use fusebake::volume::VolumeConfig;
use fusebake::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fusebake",
    version,
    about = "Volumetric RGB-D fusion, mesh simplification, and texture atlas baking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic RGB-D capture of a scene into a frame directory.
    Synth {
        /// Scene description TOML.
        #[arg(long)]
        scene: PathBuf,
        /// Camera rig calibration TOML.
        #[arg(long)]
        calib: PathBuf,
        /// Directory for the rendered frames.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse a frame directory into geometry and colour volumes.
    Fuse {
        /// Frame directory written by `synth`.
        #[arg(long)]
        frames: PathBuf,
        /// Camera rig calibration TOML.
        #[arg(long)]
        calib: PathBuf,
        /// Geometry grid voxels per edge.
        #[arg(long, default_value_t = 256)]
        geo_dim: u32,
        /// Colour grid voxels per edge.
        #[arg(long, default_value_t = 512)]
        color_dim: u32,
        /// Volume cube edge length in mm.
        #[arg(long, default_value_t = 1000.0)]
        size: f64,
        /// Volume cube center in the fusion frame, as `x,y,z` in mm.
        #[arg(long, value_parser = parse_vec3)]
        center: Vec3,
        /// Directory for `geometry.fbvg` and `color.fbvc`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the isosurface of a geometry volume as a mesh.
    Mesh {
        /// Geometry volume (`.fbvg`).
        #[arg(long)]
        volume: PathBuf,
        /// Isolevel in truncation units, inside negative.
        #[arg(long, default_value_t = 0.0)]
        iso: f64,
        /// Output OBJ path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simplify a mesh to a fraction of its triangle count.
    Decimate {
        /// Input OBJ path.
        #[arg(long)]
        mesh: PathBuf,
        /// Fraction of triangles to keep, in (0, 1].
        #[arg(long)]
        rate: f64,
        /// Output OBJ path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Bake a texture atlas for a mesh from a colour volume.
    Texture {
        /// Input OBJ path.
        #[arg(long)]
        mesh: PathBuf,
        /// Colour volume (`.fbvc`).
        #[arg(long)]
        volume: PathBuf,
        /// Texture sample spacing on the surface, mm.
        #[arg(long, default_value_t = 2.0)]
        pixel_size: f64,
        /// Atlas page edge length in texels.
        #[arg(long, default_value_t = 1024)]
        page_edge: u32,
        /// Output OBJ path; the MTL and page images land next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a snapshot image of a textured or vertex-coloured model.
    Snapshot {
        /// Input OBJ path; textured when it references an MTL.
        #[arg(long)]
        mesh: PathBuf,
        /// Snapshot width in pixels.
        #[arg(long, default_value_t = 1280)]
        width: u32,
        /// Snapshot height in pixels.
        #[arg(long, default_value_t = 960)]
        height: u32,
        /// Focal length in pixels; defaults to the width.
        #[arg(long)]
        focal: Option<f64>,
        /// View direction toward the model, as `x,y,z`.
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,1")]
        direction: Vec3,
        /// Background colour, as `r,g,b` in 0..=255.
        #[arg(long, value_parser = parse_rgb, default_value = "30,30,30")]
        background: Rgb,
        /// Output PPM path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the sharpness of images as mean gradient magnitude.
    Metric {
        /// PPM images to score.
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Run capture, fusion, meshing, texturing, snapshots, and metrics.
    Pipeline {
        /// Pipeline run description TOML.
        #[arg(long)]
        config: PathBuf,
        /// Directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Background colour argument.
#[derive(Debug, Clone, Copy)]
struct Rgb([u8; 3]);

fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("bad number {part:?}"))?;
    }
    Ok(Vec3::new(out[0], out[1], out[2]))
}

fn parse_rgb(s: &str) -> std::result::Result<Rgb, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected r,g,b, got {s:?}"));
    }
    let mut out = [0u8; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("bad channel {part:?}"))?;
    }
    Ok(Rgb(out))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { scene, calib, out } => cmd_synth(&scene, &calib, &out),
        Command::Fuse {
            frames,
            calib,
            geo_dim,
            color_dim,
            size,
            center,
            out,
        } => cmd_fuse(&frames, &calib, geo_dim, color_dim, size, center, &out),
        Command::Mesh { volume, iso, out } => cmd_mesh(&volume, iso, &out),
        Command::Decimate { mesh, rate, out } => cmd_decimate(&mesh, rate, &out),
        Command::Texture {
            mesh,
            volume,
            pixel_size,
            page_edge,
            out,
        } => cmd_texture(&mesh, &volume, pixel_size, page_edge, &out),
        Command::Snapshot {
            mesh,
            width,
            height,
            focal,
            direction,
            background,
            out,
        } => cmd_snapshot(&mesh, width, height, focal, direction, background.0, &out),
        Command::Metric { images } => cmd_metric(&images),
        Command::Pipeline { config, out } => cmd_pipeline(&config, &out),
    }
}

fn cmd_synth(scene_path: &Path, calib_path: &Path, out: &Path) -> Result<()> {
    let scene_file = load_scene(scene_path)?;
    let calib = load_calibration(calib_path)?;
    let scene = scene_file.to_scene()?;
    let traj = scene_file.to_trajectory()?;
    println!(
        "rendering {} frames at {}x{} depth / {}x{} colour",
        traj.len(),
        calib.depth.width,
        calib.depth.height,
        calib.hd.width,
        calib.hd.height
    );
    let frames = render_sequence(&scene, &traj, &calib)?;
    write_frames(out, &frames)?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuse(
    frames_dir: &Path,
    calib_path: &Path,
    geo_dim: u32,
    color_dim: u32,
    size: f64,
    center: Vec3,
    out: &Path,
) -> Result<()> {
    let calib = load_calibration(calib_path)?;
    let origin = center - Vec3::from_element(size / 2.0);
    let config = VolumeConfig::new(geo_dim, color_dim, size, origin)?;
    // announce the resolved grids before allocating anything, so absurd
    // configurations can be caught from the log
    let geo_voxels = u64::from(geo_dim).pow(3);
    let color_voxels = u64::from(color_dim).pow(3);
    println!(
        "geometry grid {geo_dim}^3 = {geo_voxels} voxels ({:.1} MB), colour grid {color_dim}^3 = {color_voxels} voxels ({:.1} MB)",
        geo_voxels as f64 * 8.0 / 1e6,
        color_voxels as f64 * 16.0 / 1e6,
    );
    println!(
        "volume spans {} mm from ({:.1}, {:.1}, {:.1}), voxel pitch {:.3} mm geometry / {:.3} mm colour",
        size,
        origin.x,
        origin.y,
        origin.z,
        config.geo_pitch(),
        config.color_pitch(),
    );
    let frames = read_frames(frames_dir)?;
    let (tsdf, color) = fuse_frames(&frames, &calib, &config)?;
    std::fs::create_dir_all(out)?;
    let geo_path = out.join("geometry.fbvg");
    let color_path = out.join("color.fbvc");
    write_tsdf_volume(&geo_path, &tsdf)?;
    write_color_volume(&color_path, &color)?;
    println!(
        "fused {} frames into {} and {}",
        frames.len(),
        geo_path.display(),
        color_path.display()
    );
    Ok(())
}

fn cmd_mesh(volume: &Path, iso: f64, out: &Path) -> Result<()> {
    let tsdf = read_tsdf_volume(volume)?;
    let mesh = marching_cubes(&tsdf, iso)?;
    export_mesh_obj(out, &mesh)?;
    println!(
        "extracted {} vertices / {} triangles into {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        out.display()
    );
    Ok(())
}

fn cmd_decimate(mesh_path: &Path, rate: f64, out: &Path) -> Result<()> {
    let mesh = import_mesh_obj(mesh_path)?;
    let before = mesh.triangles.len();
    let simplified = decimate(&mesh, rate)?;
    export_mesh_obj(out, &simplified)?;
    println!(
        "decimated {} -> {} triangles (rate {rate}) into {}",
        before,
        simplified.triangles.len(),
        out.display()
    );
    Ok(())
}

fn cmd_texture(
    mesh_path: &Path,
    volume: &Path,
    pixel_size: f64,
    page_edge: u32,
    out: &Path,
) -> Result<()> {
    let mesh = import_mesh_obj(mesh_path)?;
    let color = read_color_volume(volume)?;
    let textured = texture_mesh(&mesh, &color, pixel_size, page_edge)?;
    export_textured_obj(out, &textured)?;
    println!(
        "baked {} triangle maps onto {} page(s) of {} texels into {}",
        textured.mesh.triangles.len(),
        textured.atlas.pages.len(),
        page_edge,
        out.display()
    );
    Ok(())
}

fn cmd_snapshot(
    mesh_path: &Path,
    width: u32,
    height: u32,
    focal: Option<f64>,
    direction: Vec3,
    background: [u8; 3],
    out: &Path,
) -> Result<()> {
    let focal = focal.unwrap_or(f64::from(width));
    let intr = fusebake::geometry::CameraIntrinsics::new(
        focal,
        focal,
        (f64::from(width) - 1.0) / 2.0,
        (f64::from(height) - 1.0) / 2.0,
        width,
        height,
    )?;
    let text = std::fs::read_to_string(mesh_path)?;
    let is_textured = text
        .lines()
        .any(|l| l.split_ascii_whitespace().next() == Some("mtllib"));
    let img = if is_textured {
        let textured = import_textured_obj(mesh_path)?;
        let pose = frame_mesh_camera(&textured.mesh, direction, &intr)?;
        render_snapshot(&SnapshotModel::Atlas(&textured), &pose, &intr, background)?
    } else {
        let mesh = import_mesh_obj(mesh_path)?;
        if mesh.colors.is_none() {
            return Err(Error::InvalidMesh(
                "snapshot input has neither a texture atlas nor vertex colours".into(),
            ));
        }
        let pose = frame_mesh_camera(&mesh, direction, &intr)?;
        render_snapshot(&SnapshotModel::VertexColors(&mesh), &pose, &intr, background)?
    };
    write_ppm(out, &img)?;
    println!("wrote {}x{} snapshot to {}", width, height, out.display());
    Ok(())
}

fn cmd_metric(images: &[PathBuf]) -> Result<()> {
    for path in images {
        let img = read_ppm(path)?;
        let g = mean_gradient_magnitude(&img)?;
        println!("{}: {g:.6}", path.display());
    }
    Ok(())
}

fn cmd_pipeline(config: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let report = fusebake::pipeline::run_pipeline(config, out)?;
    println!("pipeline finished: {}", out.display());
    print!("{}", report.to_toml_string());
    Ok(())
}
