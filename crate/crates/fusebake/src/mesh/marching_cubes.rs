//! Isosurface extraction from the distance volume.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::tables::{EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE};
use crate::mesh::TriangleMesh;
use crate::volume::TsdfVolume;

/// Extracts the isosurface of the fused distance field as an indexed
/// triangle mesh.
///
/// Cells are the cubes between eight neighbouring voxel centers. Any cell
/// touching an unobserved voxel is skipped, so the mesh never cuts through
/// space no frame has seen. Surface vertices are interpolated linearly
/// along crossed cell edges and shared between neighbouring cells; winding
/// is counter-clockwise seen from the positive (empty space) side of the
/// field.
///
/// `iso` is the extraction level in truncation units and normally 0.
pub fn marching_cubes(vol: &TsdfVolume, iso: f64) -> Result<TriangleMesh> {
    if !iso.is_finite() || iso.abs() >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "isolevel must lie strictly inside (-1, 1), got {iso}"
        )));
    }
    let dim = vol.dim();
    let mut mesh = TriangleMesh::new();
    // vertex index per (lower voxel, axis) grid edge
    let mut edge_vertices: HashMap<(u32, u32, u32, u8), u32> = HashMap::new();

    let mut corner_value = [0.0f64; 8];
    for z in 0..dim - 1 {
        for y in 0..dim - 1 {
            for x in 0..dim - 1 {
                let corners = cell_corners(x, y, z);
                let mut case = 0usize;
                let mut observed = true;
                for (i, &(cx, cy, cz)) in corners.iter().enumerate() {
                    if vol.weight_at(cx, cy, cz) <= 0.0 {
                        observed = false;
                        break;
                    }
                    let v = f64::from(vol.tsdf_at(cx, cy, cz));
                    corner_value[i] = v;
                    if v < iso {
                        case |= 1 << i;
                    }
                }
                if !observed || EDGE_TABLE[case] == 0 {
                    continue;
                }

                let mut edge_vertex = [u32::MAX; 12];
                for edge in 0..12 {
                    if EDGE_TABLE[case] & (1 << edge) == 0 {
                        continue;
                    }
                    let [a, b] = EDGE_CORNERS[edge];
                    let key = edge_key(corners[a], corners[b]);
                    let next = mesh.vertices.len() as u32;
                    let idx = *edge_vertices.entry(key).or_insert_with(|| {
                        let (ax, ay, az) = corners[a];
                        let (bx, by, bz) = corners[b];
                        let va = corner_value[a];
                        let vb = corner_value[b];
                        let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                        let pa = vol.voxel_center(ax, ay, az);
                        let pb = vol.voxel_center(bx, by, bz);
                        mesh.vertices.push(pa + (pb - pa) * t);
                        next
                    });
                    edge_vertex[edge] = idx;
                }

                let row = &TRIANGLE_TABLE[case];
                let mut i = 0;
                while row[i] >= 0 {
                    let (a, b, c) = (
                        edge_vertex[row[i] as usize],
                        edge_vertex[row[i + 1] as usize],
                        edge_vertex[row[i + 2] as usize],
                    );
                    // the tables wind toward the negative side; swap to
                    // face the positive (outside) direction
                    if a != b && b != c && a != c {
                        mesh.triangles.push([a, c, b]);
                    }
                    i += 3;
                }
            }
        }
    }
    Ok(mesh)
}

/// Voxel coordinates of a cell's eight corners, in table order.
fn cell_corners(x: u32, y: u32, z: u32) -> [(u32, u32, u32); 8] {
    [
        (x, y, z),
        (x + 1, y, z),
        (x + 1, y + 1, z),
        (x, y + 1, z),
        (x, y, z + 1),
        (x + 1, y, z + 1),
        (x + 1, y + 1, z + 1),
        (x, y + 1, z + 1),
    ]
}

/// Canonical key for the grid edge between two corner voxels: the lower
/// voxel plus the axis the edge runs along.
fn edge_key(a: (u32, u32, u32), b: (u32, u32, u32)) -> (u32, u32, u32, u8) {
    let (lo, hi) = if (a.2, a.1, a.0) <= (b.2, b.1, b.0) {
        (a, b)
    } else {
        (b, a)
    };
    let axis = if hi.0 > lo.0 {
        0
    } else if hi.1 > lo.1 {
        1
    } else {
        2
    };
    (lo.0, lo.1, lo.2, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::volume::VolumeConfig;

    fn tiny_volume(dim: u32) -> TsdfVolume {
        let cfg = VolumeConfig::new(dim, dim, f64::from(dim) * 10.0, Vec3::zeros()).unwrap();
        TsdfVolume::new(cfg).unwrap()
    }

    #[test]
    fn single_inside_corner_yields_one_triangle() {
        let mut vol = tiny_volume(2);
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    vol.set_voxel(x, y, z, 0.5, 1.0);
                }
            }
        }
        vol.set_voxel(0, 0, 0, -0.5, 1.0);
        let mesh = marching_cubes(&vol, 0.0).unwrap();
        assert_eq!(mesh.triangles.len(), 1);
        assert_eq!(mesh.vertices.len(), 3);
        mesh.validate().unwrap();
        // each vertex sits at an edge midpoint next to the inside corner
        let origin = vol.voxel_center(0, 0, 0);
        for v in &mesh.vertices {
            assert!((v - origin).norm() <= 5.0 + 1e-9);
        }
        // winding faces away from the inside corner
        let n = mesh.triangle_normal(0);
        let center = (mesh.vertices[0] + mesh.vertices[1] + mesh.vertices[2]) / 3.0;
        assert!(n.dot(&(origin - center)) < 0.0, "normal points into the solid");
    }

    #[test]
    fn unobserved_corner_suppresses_cell() {
        let mut vol = tiny_volume(2);
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    vol.set_voxel(x, y, z, 0.5, 1.0);
                }
            }
        }
        vol.set_voxel(0, 0, 0, -0.5, 1.0);
        vol.set_voxel(1, 1, 1, 0.5, 0.0);
        let mesh = marching_cubes(&vol, 0.0).unwrap();
        assert!(mesh.triangles.is_empty());
    }

    #[test]
    fn sphere_vertices_lie_on_sphere_and_are_shared() {
        let mut vol = tiny_volume(32);
        let center = Vec3::new(160.0, 160.0, 160.0);
        // not expressible as a distance between voxel centers, so no corner
        // value lands exactly on the isolevel
        let radius = 90.5;
        vol.fill_from_sdf(|p| (p - center).norm() - radius);
        let mesh = marching_cubes(&vol, 0.0).unwrap();
        mesh.validate().unwrap();
        assert!(mesh.triangles.len() > 100);

        let pitch = vol.config().geo_pitch();
        for v in &mesh.vertices {
            let err = ((v - center).norm() - radius).abs();
            assert!(err < pitch * 3f64.sqrt(), "vertex {err} mm off the sphere");
        }
        // indexed extraction: far fewer vertices than corner count
        assert!(mesh.vertices.len() < mesh.triangles.len() * 3 / 2);

        // every triangle faces outward
        for i in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle_corners(i);
            let n = mesh.triangle_normal(i);
            let radial = (a + b + c) / 3.0 - center;
            assert!(n.dot(&radial) > 0.0, "triangle {i} faces inward");
        }
    }

    #[test]
    fn closed_surface_has_closed_topology() {
        let mut vol = tiny_volume(16);
        let center = Vec3::new(80.0, 80.0, 80.0);
        vol.fill_from_sdf(|p| (p - center).norm() - 44.9);
        let mesh = marching_cubes(&vol, 0.0).unwrap();
        // every edge appears exactly twice on a watertight surface
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(counts.values().all(|&c| c == 2));
    }

    #[test]
    fn isolevel_validation() {
        let vol = tiny_volume(2);
        assert!(marching_cubes(&vol, 1.5).is_err());
        assert!(marching_cubes(&vol, f64::NAN).is_err());
    }
}
