//! Per-triangle texture baking and atlas assembly.
//!
//! Every mesh triangle gets its own small 2D texture map: a texel grid
//! spanned by the triangle's two edge vectors, sampled from the colour
//! volume at a configurable physical texel size. The maps are then packed
//! into shared square atlas pages and each triangle's corners receive UV
//! coordinates pointing at its map. Because texel size is independent of
//! mesh resolution, a heavily simplified mesh can carry appearance detail
//! at the full colour volume resolution.

mod atlas;
mod bake;

pub use atlas::{merge_textures, texture_mesh, Placement, TextureAtlas, TexturedMesh};
pub use bake::{bake_polygon_texture, colored_vertex_texture, TextureMap};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Texel coordinate frame over one triangle.
///
/// The frame's origin sits at the first corner; texel `(i, j)` lies at
/// `origin + i * step_u + j * step_v`, where the step vectors run along the
/// triangle's two edges scaled so that texel `(width - 1, 0)` lands exactly
/// on the second corner and `(0, height - 1)` on the third. Texels on or
/// below the diagonal (in grid terms, `i / (width - 1) + j / (height - 1)
/// <= 1`) cover the triangle itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleFrame {
    /// First triangle corner; texel (0, 0).
    pub origin: Vec3,
    /// World step between horizontally adjacent texels, in mm.
    pub step_u: Vec3,
    /// World step between vertically adjacent texels, in mm.
    pub step_v: Vec3,
    /// Texels per row, at least 2.
    pub width: u32,
    /// Texel rows, at least 2.
    pub height: u32,
}

impl TriangleFrame {
    /// Builds the texel frame for a triangle at the given physical texel
    /// edge length in mm.
    ///
    /// The grid is sized so neighbouring texels are at most `pixel_size_mm`
    /// apart along each edge. Degenerate triangles (an edge or the area
    /// vanishing) are rejected.
    pub fn new(a: Vec3, b: Vec3, c: Vec3, pixel_size_mm: f64) -> Result<Self> {
        if !(pixel_size_mm.is_finite() && pixel_size_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "texel size must be positive, got {pixel_size_mm}"
            )));
        }
        let ab = b - a;
        let ac = c - a;
        let len_ab = ab.norm();
        let len_ac = ac.norm();
        if len_ab < 1e-9 || len_ac < 1e-9 || ab.cross(&ac).norm() < 1e-12 {
            return Err(Error::InvalidMesh(
                "degenerate triangle has no texture frame".into(),
            ));
        }
        let width = (len_ab / pixel_size_mm).ceil() as u32 + 1;
        let height = (len_ac / pixel_size_mm).ceil() as u32 + 1;
        Ok(Self {
            origin: a,
            step_u: ab / f64::from(width - 1),
            step_v: ac / f64::from(height - 1),
            width,
            height,
        })
    }

    /// World position of a texel center.
    ///
    /// Defined for the whole grid including the half beyond the diagonal;
    /// positions there extend past the triangle onto its parallelogram.
    ///
    /// # Panics
    /// Panics when the texel is outside the grid.
    pub fn texel_world_position(&self, i: u32, j: u32) -> Vec3 {
        assert!(i < self.width && j < self.height, "texel outside frame");
        self.origin + self.step_u * f64::from(i) + self.step_v * f64::from(j)
    }

    /// Largest renderable texel column in row `j`: texels up to and
    /// including it cover the triangle.
    pub(crate) fn last_covered_column(&self, j: u32) -> u32 {
        let frac = 1.0 - f64::from(j) / f64::from(self.height - 1);
        let i = (frac * f64::from(self.width - 1) + 1e-9).floor();
        i.max(0.0) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frame_spans_edges_with_configured_density() {
        // edges of length 10 and 6 at texel size 1
        let a = Vec3::new(5.0, 5.0, 0.0);
        let b = Vec3::new(15.0, 5.0, 0.0);
        let c = Vec3::new(5.0, 11.0, 0.0);
        let f = TriangleFrame::new(a, b, c, 1.0).unwrap();
        assert_eq!((f.width, f.height), (11, 7));
        assert_relative_eq!(f.step_u.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.step_v.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn corner_texels_land_on_triangle_corners() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(7.5, -2.0, 4.0);
        let c = Vec3::new(0.0, 9.0, 1.5);
        let f = TriangleFrame::new(a, b, c, 0.7).unwrap();
        assert_relative_eq!(f.texel_world_position(0, 0), a, epsilon = 1e-12);
        assert_relative_eq!(f.texel_world_position(f.width - 1, 0), b, epsilon = 1e-9);
        assert_relative_eq!(f.texel_world_position(0, f.height - 1), c, epsilon = 1e-9);
    }

    #[test]
    fn texel_steps_shrink_when_pixel_size_doubles() {
        let a = Vec3::zeros();
        let b = Vec3::new(20.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 20.0, 0.0);
        let fine = TriangleFrame::new(a, b, c, 1.0).unwrap();
        let coarse = TriangleFrame::new(a, b, c, 2.0).unwrap();
        assert_eq!(fine.width, 21);
        assert_eq!(coarse.width, 11);
        assert!(coarse.step_u.norm() > fine.step_u.norm());
    }

    #[test]
    fn tiny_triangles_still_get_a_two_by_two_frame() {
        let f = TriangleFrame::new(
            Vec3::zeros(),
            Vec3::new(0.3, 0.0, 0.0),
            Vec3::new(0.0, 0.2, 0.0),
            5.0,
        )
        .unwrap();
        assert_eq!((f.width, f.height), (2, 2));
    }

    #[test]
    fn degenerate_triangles_are_rejected() {
        let a = Vec3::zeros();
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert!(TriangleFrame::new(a, b, b, 1.0).is_err());
        assert!(TriangleFrame::new(a, b, Vec3::new(2.0, 0.0, 0.0), 1.0).is_err());
        assert!(TriangleFrame::new(a, b, Vec3::new(0.0, 1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn covered_columns_trace_the_diagonal() {
        let f = TriangleFrame::new(
            Vec3::zeros(),
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(0.0, 4.0, 0.0),
            1.0,
        )
        .unwrap();
        assert_eq!((f.width, f.height), (5, 5));
        assert_eq!(f.last_covered_column(0), 4);
        assert_eq!(f.last_covered_column(1), 3);
        assert_eq!(f.last_covered_column(4), 0);
    }
}
