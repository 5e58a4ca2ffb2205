//! Triangle meshes, isosurface extraction, and simplification.

mod decimate;
mod marching_cubes;
mod tables;

pub use decimate::{decimate, edge_collapse_cost, Quadric};
pub use marching_cubes::marching_cubes;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Indexed triangle mesh with optional per-vertex colours.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    /// Vertex positions, in mm.
    pub vertices: Vec<Vec3>,
    /// Counter-clockwise vertex index triples.
    pub triangles: Vec<[u32; 3]>,
    /// Optional per-vertex RGB in `[0, 255]`, same length as `vertices`.
    pub colors: Option<Vec<[f64; 3]>>,
}

impl TriangleMesh {
    /// Creates an empty mesh.
    pub fn new() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            colors: None,
        }
    }

    /// Checks index bounds, colour array length, and triangle degeneracy by
    /// index (repeated indices within a triangle).
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i} references vertex outside 0..{n}"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i} repeats a vertex index"
                )));
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != self.vertices.len() {
                return Err(Error::InvalidMesh(format!(
                    "{} colours for {} vertices",
                    c.len(),
                    self.vertices.len()
                )));
            }
        }
        Ok(())
    }

    /// Corner positions of a triangle.
    ///
    /// # Panics
    /// Panics when the index is out of range.
    pub fn triangle_corners(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Unnormalized outward normal (cross product) of a triangle.
    ///
    /// # Panics
    /// Panics when the index is out of range.
    pub fn triangle_normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.triangle_corners(i);
        (b - a).cross(&(c - a))
    }

    /// Total surface area in mm^2.
    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| self.triangle_normal(i).norm() / 2.0)
            .sum()
    }

    /// Builds a flat grid of `nx` by `ny` cells in the z = 0 plane with the
    /// given cell spacing in mm.
    ///
    /// Vertices run row-major, `(nx + 1) * (ny + 1)` of them. Cells are
    /// visited row-major as well; each pushes its lower triangle
    /// `[v, v+x, v+x+y]` then its upper triangle `[v, v+x+y, v+y]`, so cell
    /// `(i, j)` owns triangles `2 * (j * nx + i)` and `2 * (j * nx + i) + 1`.
    pub fn planar_grid(nx: u32, ny: u32, spacing: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(spacing > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid needs positive cells and spacing, got {nx}x{ny} at {spacing}"
            )));
        }
        let mut vertices = Vec::with_capacity(((nx + 1) * (ny + 1)) as usize);
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vec3::new(
                    f64::from(i) * spacing,
                    f64::from(j) * spacing,
                    0.0,
                ));
            }
        }
        let at = |i: u32, j: u32| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * (nx * ny) as usize);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
                triangles.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
            }
        }
        Ok(Self {
            vertices,
            triangles,
            colors: None,
        })
    }

    /// Drops vertices no triangle references, remapping indices.
    pub fn compact(&mut self) {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut kept = 0u32;
        for t in &self.triangles {
            for &v in t {
                if remap[v as usize] == u32::MAX {
                    remap[v as usize] = kept;
                    kept += 1;
                }
            }
        }
        let mut vertices = vec![Vec3::zeros(); kept as usize];
        let mut colors = self
            .colors
            .as_ref()
            .map(|_| vec![[0.0; 3]; kept as usize]);
        for (old, &new) in remap.iter().enumerate() {
            if new != u32::MAX {
                vertices[new as usize] = self.vertices[old];
                if let (Some(dst), Some(src)) = (colors.as_mut(), self.colors.as_ref()) {
                    dst[new as usize] = src[old];
                }
            }
        }
        for t in &mut self.triangles {
            for v in t.iter_mut() {
                *v = remap[*v as usize];
            }
        }
        self.vertices = vertices;
        self.colors = colors;
    }
}

impl Default for TriangleMesh {
    fn default() -> Self {
        Self::new()
    }
}
