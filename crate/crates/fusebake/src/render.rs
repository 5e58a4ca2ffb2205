//! Software rasterizer for model snapshots.
//!
//! Renders a textured or vertex-coloured mesh from a virtual camera into
//! an RGB image with a z-buffer. Snapshots of the same model state from
//! the same viewpoint feed the sharpness metrics, so the rasterizer is
//! fully deterministic: rows are processed independently and triangles in
//! index order, making the output independent of thread scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform, Vec3};
use crate::mesh::TriangleMesh;
use crate::raster::RgbRaster;
use crate::texture::TexturedMesh;

/// Triangles with any vertex closer than this are skipped, in mm. The
/// rasterizer does not clip against the near plane; snapshot cameras are
/// expected to frame the whole model.
const NEAR_MM: f64 = 1.0;

/// A mesh paired with its colour source, ready to snapshot.
#[derive(Debug, Clone, Copy)]
pub enum SnapshotModel<'a> {
    /// Triangles sample an atlas page through their UV coordinates.
    Atlas(&'a TexturedMesh),
    /// Triangles interpolate per-vertex colours.
    VertexColors(&'a TriangleMesh),
}

impl<'a> SnapshotModel<'a> {
    fn mesh(&self) -> &'a TriangleMesh {
        match self {
            SnapshotModel::Atlas(t) => &t.mesh,
            SnapshotModel::VertexColors(m) => m,
        }
    }
}

/// Per-triangle data prepared once before rasterization.
struct PreppedTriangle {
    /// Screen positions of the corners, pixels.
    px: [[f64; 2]; 3],
    /// Camera-space depth of the corners, mm.
    z: [f64; 3],
    /// Triangle index in the source mesh.
    index: u32,
}

/// Renders one snapshot of a model.
///
/// `pose` maps model coordinates to the camera, with the same convention
/// as every other camera in the crate. Pixels no triangle covers get the
/// background colour. Depth resolves by strict nearest-wins; at exactly
/// equal depth the lower triangle index wins, so coincident geometry
/// renders reproducibly.
pub fn render_snapshot(
    model: &SnapshotModel,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    background: [u8; 3],
) -> Result<RgbRaster> {
    let mesh = model.mesh();
    mesh.validate()?;
    let colors = match model {
        SnapshotModel::VertexColors(m) => {
            let c = m.colors.as_ref().ok_or_else(|| {
                Error::InvalidMesh("vertex-colour snapshot needs per-vertex colours".into())
            })?;
            Some(c.as_slice())
        }
        SnapshotModel::Atlas(_) => None,
    };

    // project every vertex once
    let cam: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|v| pose.transform_point(*v))
        .collect();
    let px: Vec<Option<[f64; 2]>> = cam
        .iter()
        .map(|p| {
            if p.z >= NEAR_MM {
                intr.project(*p).ok().map(|(u, v)| [u, v])
            } else {
                None
            }
        })
        .collect();

    // bin triangles by the pixel rows their bounding box touches
    let height = intr.height as usize;
    let width = intr.width as usize;
    let mut prepared = Vec::new();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); height];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|i| i as usize);
        let (Some(pa), Some(pb), Some(pc)) = (px[a], px[b], px[c]) else {
            continue;
        };
        let ys = [pa[1], pb[1], pc[1]];
        let y0 = ys.iter().fold(f64::INFINITY, |m, v| m.min(*v)).floor().max(0.0) as usize;
        let y1 = ys.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)).ceil();
        if y1 < 0.0 || y0 >= height {
            continue;
        }
        let y1 = (y1 as usize).min(height - 1);
        let id = prepared.len() as u32;
        prepared.push(PreppedTriangle {
            px: [pa, pb, pc],
            z: [cam[a].z, cam[b].z, cam[c].z],
            index: t as u32,
        });
        for bin in rows.iter_mut().take(y1 + 1).skip(y0) {
            bin.push(id);
        }
    }

    let mut img = RgbRaster::new(intr.width, intr.height)?;
    img.data
        .par_chunks_mut(3 * width)
        .enumerate()
        .for_each(|(y, out_row)| {
            let mut depth_row = vec![f64::INFINITY; width];
            for px3 in out_row.chunks_mut(3) {
                px3.copy_from_slice(&background);
            }
            for &id in &rows[y] {
                let tri = &prepared[id as usize];
                rasterize_row(tri, y as f64, width, &mut depth_row, out_row, |bary| {
                    shade(model, colors, tri.index, bary)
                });
            }
        });
    Ok(img)
}

/// Rasterizes one triangle across one pixel row.
fn rasterize_row(
    tri: &PreppedTriangle,
    y: f64,
    width: usize,
    depth_row: &mut [f64],
    out_row: &mut [u8],
    shade: impl Fn([f64; 3]) -> [f64; 3],
) {
    let [p0, p1, p2] = tri.px;
    let area2 = edge(p0, p1, p2);
    if area2.abs() < 1e-12 {
        return;
    }
    let xs = [p0[0], p1[0], p2[0]];
    let x0 = xs.iter().fold(f64::INFINITY, |m, v| m.min(*v)).floor().max(0.0) as usize;
    let x1 = xs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)).ceil();
    if x1 < 0.0 || x0 >= width {
        return;
    }
    let x1 = (x1 as usize).min(width - 1);
    for x in x0..=x1 {
        let p = [x as f64, y];
        // screen-space barycentrics from the sub-triangle areas
        let w0 = edge(p1, p2, p) / area2;
        let w1 = edge(p2, p0, p) / area2;
        let w2 = edge(p0, p1, p) / area2;
        if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
            continue;
        }
        // perspective correction: interpolate 1/z linearly in screen space
        let inv_z = w0 / tri.z[0] + w1 / tri.z[1] + w2 / tri.z[2];
        let depth = 1.0 / inv_z;
        if depth < depth_row[x] {
            depth_row[x] = depth;
            let bary = [
                w0 / tri.z[0] * depth,
                w1 / tri.z[1] * depth,
                w2 / tri.z[2] * depth,
            ];
            let rgb = shade(bary);
            for c in 0..3 {
                out_row[3 * x + c] = rgb[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
}

/// Signed double area of the triangle `a`, `b`, `p`.
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Resolves the colour of a surface point from its barycentrics.
fn shade(
    model: &SnapshotModel,
    colors: Option<&[[f64; 3]]>,
    tri_index: u32,
    bary: [f64; 3],
) -> [f64; 3] {
    match model {
        SnapshotModel::Atlas(t) => {
            let uvs = t.atlas.uvs[tri_index as usize];
            let u = bary[0] * uvs[0][0] + bary[1] * uvs[1][0] + bary[2] * uvs[2][0];
            let v = bary[0] * uvs[0][1] + bary[1] * uvs[1][1] + bary[2] * uvs[2][1];
            let page = t.atlas.placements[tri_index as usize].page;
            t.atlas.sample(page, u, v)
        }
        SnapshotModel::VertexColors(m) => {
            let [a, b, c] = m.triangles[tri_index as usize].map(|i| i as usize);
            let colors = colors.expect("checked on entry");
            let mut rgb = [0.0; 3];
            for ch in 0..3 {
                rgb[ch] = bary[0] * colors[a][ch] + bary[1] * colors[b][ch]
                    + bary[2] * colors[c][ch];
            }
            rgb
        }
    }
}

/// Places a snapshot camera that frames the whole mesh.
///
/// Looks at the bounding-box center from the given direction, far enough
/// away that the bounding sphere fits inside the narrower field of view
/// with some margin.
pub fn frame_mesh_camera(
    mesh: &TriangleMesh,
    direction: Vec3,
    intr: &CameraIntrinsics,
) -> Result<RigidTransform> {
    if mesh.vertices.is_empty() {
        return Err(Error::InvalidMesh("cannot frame an empty mesh".into()));
    }
    let dir = direction
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidTransform("view direction must be nonzero".into()))?;
    let mut lo = mesh.vertices[0];
    let mut hi = mesh.vertices[0];
    for v in &mesh.vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let center = (lo + hi) / 2.0;
    let radius = ((hi - lo) / 2.0).norm().max(1.0);
    let half_fov_x = (f64::from(intr.width) / 2.0 / intr.fx).atan();
    let half_fov_y = (f64::from(intr.height) / 2.0 / intr.fy).atan();
    let half_fov = half_fov_x.min(half_fov_y);
    let distance = 1.2 * radius / half_fov.sin();
    let eye = center - dir * distance;
    let down_hint = if dir.x.abs() < 0.9 {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    crate::geometry::look_at(eye, center, down_hint)
}
