//! File formats for captures, volumes, meshes, and configuration.
//!
//! Binary formats are little-endian with a four-byte magic and a version
//! number. Text formats are line-oriented. Readers validate eagerly and
//! report the offending path and reason instead of producing corrupt
//! in-memory state.

mod config;
mod depth_raster;
mod obj;
mod ppm;
mod trajectory;
mod volume_dump;

pub use config::{
    load_calibration, load_pipeline, load_scene, AlbedoSpec, CalibrationFile, IntrinsicsSpec,
    NoiseSpec, ObjectSpec, OrbitSpec, PipelineFile, SceneFile, ShapeSpec, SnapshotSpec,
    TextureSpec, TransformSpec, VolumeSpec,
};
pub use depth_raster::{read_depth_raster, write_depth_raster};
pub use obj::{export_mesh_obj, export_textured_obj, import_mesh_obj, import_textured_obj};
pub use ppm::{read_ppm, write_ppm};
pub use trajectory::{read_trajectory, write_trajectory};
pub use volume_dump::{
    read_color_volume, read_tsdf_volume, write_color_volume, write_tsdf_volume,
};
