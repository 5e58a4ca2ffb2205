//! Packing per-triangle texture maps into shared atlas pages.

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::raster::RgbRaster;
use crate::texture::{bake_polygon_texture, TextureMap, TriangleFrame};
use crate::volume::ColorVolume;

/// Location of one texture map inside an atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    /// Page the map lives on.
    pub page: u32,
    /// Left texel column of the map on the page.
    pub x: u32,
    /// Top texel row of the map on the page.
    pub y: u32,
    /// Map width in texels.
    pub w: u32,
    /// Map height in texels.
    pub h: u32,
}

/// Square texture pages plus the per-triangle placements and UV
/// coordinates into them.
///
/// UV coordinates follow image convention: u right, v down, both in
/// `[0, 1]` over a page, addressing texel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureAtlas {
    /// Edge length of every page in texels.
    pub page_edge: u32,
    /// The page images.
    pub pages: Vec<RgbRaster>,
    /// Placement of triangle i's map.
    pub placements: Vec<Placement>,
    /// UVs of triangle i's three corners.
    pub uvs: Vec<[[f64; 2]; 3]>,
}

impl TextureAtlas {
    /// Bilinear colour lookup on a page at a UV coordinate.
    ///
    /// # Panics
    /// Panics when the page index is out of range.
    pub fn sample(&self, page: u32, u: f64, v: f64) -> [f64; 3] {
        let edge = f64::from(self.page_edge);
        self.pages[page as usize].sample_bilinear(u * edge - 0.5, v * edge - 0.5)
    }

    /// UVs of a triangle's three corners for a placement: corner 0 at the
    /// map's origin texel center, corner 1 ending its first row, corner 2
    /// ending its first column.
    pub fn corner_uvs(placement: &Placement, page_edge: u32) -> [[f64; 2]; 3] {
        let edge = f64::from(page_edge);
        let (x, y) = (f64::from(placement.x), f64::from(placement.y));
        [
            [(x + 0.5) / edge, (y + 0.5) / edge],
            [
                (x + f64::from(placement.w - 1) + 0.5) / edge,
                (y + 0.5) / edge,
            ],
            [
                (x + 0.5) / edge,
                (y + f64::from(placement.h - 1) + 0.5) / edge,
            ],
        ]
    }
}

/// Mesh with its baked texture atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturedMesh {
    /// The geometry.
    pub mesh: TriangleMesh,
    /// Atlas with one placement and UV triple per triangle.
    pub atlas: TextureAtlas,
}

/// Packs texture maps into square pages of the given edge length.
///
/// Maps are placed in input order into vertical shelves: each column is
/// filled top to bottom, columns left to right, opening a new page when a
/// map fits nowhere on the current one. A one-texel gutter (filled with
/// replicated map edges) separates placements so bilinear lookups cannot
/// bleed between neighbouring maps. Maps larger than a page are an error.
pub fn merge_textures(
    maps: &[TextureMap],
    page_edge: u32,
) -> Result<(Vec<RgbRaster>, Vec<Placement>)> {
    if page_edge < 2 {
        return Err(Error::InvalidConfig(format!(
            "atlas page edge must be at least 2, got {page_edge}"
        )));
    }
    let mut pages: Vec<RgbRaster> = Vec::new();
    let mut placements = Vec::with_capacity(maps.len());
    let (mut col_x, mut cur_y, mut col_width) = (0u32, 0u32, 0u32);

    for map in maps {
        if map.width > page_edge || map.height > page_edge {
            return Err(Error::MapTooLarge {
                w: map.width,
                h: map.height,
                page_edge,
            });
        }
        if pages.is_empty() {
            pages.push(RgbRaster::new(page_edge, page_edge)?);
        }
        // drop to the next column, then to a fresh page, until the map fits
        if cur_y + map.height > page_edge {
            col_x += col_width;
            cur_y = 0;
            col_width = 0;
        }
        if col_x + map.width > page_edge {
            pages.push(RgbRaster::new(page_edge, page_edge)?);
            col_x = 0;
            cur_y = 0;
            col_width = 0;
        }
        let page = pages.len() as u32 - 1;
        let placement = Placement {
            page,
            x: col_x,
            y: cur_y,
            w: map.width,
            h: map.height,
        };
        blit(pages.last_mut().expect("page exists"), map, &placement);
        placements.push(placement);
        cur_y += map.height + 1;
        col_width = col_width.max(map.width + 1);
    }
    Ok((pages, placements))
}

/// Copies a map onto a page and replicates its border one texel into the
/// trailing gutter.
fn blit(page: &mut RgbRaster, map: &TextureMap, at: &Placement) {
    for j in 0..map.height {
        for i in 0..map.width {
            page.set_pixel(at.x + i, at.y + j, map.pixel(i, j));
        }
        if at.x + map.width < page.width {
            page.set_pixel(at.x + map.width, at.y + j, map.pixel(map.width - 1, j));
        }
    }
    if at.y + map.height < page.height {
        for i in 0..map.width {
            page.set_pixel(at.x + i, at.y + map.height, map.pixel(i, map.height - 1));
        }
        if at.x + map.width < page.width {
            page.set_pixel(at.x + map.width, at.y + map.height, map.pixel(map.width - 1, map.height - 1));
        }
    }
}

/// Bakes one texture map per triangle from the colour volume and assembles
/// the atlas.
///
/// Triangle corner order determines the map orientation: corner 0 is the
/// map origin, corner 1 ends its rows, corner 2 its columns. UVs address
/// the texel centers those corners bake to.
pub fn texture_mesh(
    mesh: &TriangleMesh,
    vol: &ColorVolume,
    pixel_size_mm: f64,
    page_edge: u32,
) -> Result<TexturedMesh> {
    mesh.validate()?;
    let mut maps = Vec::with_capacity(mesh.triangles.len());
    for i in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle_corners(i);
        let frame = TriangleFrame::new(a, b, c, pixel_size_mm)?;
        maps.push(bake_polygon_texture(vol, &frame)?);
    }
    let (pages, placements) = merge_textures(&maps, page_edge)?;
    let uvs = placements
        .iter()
        .map(|p| TextureAtlas::corner_uvs(p, page_edge))
        .collect();
    Ok(TexturedMesh {
        mesh: mesh.clone(),
        atlas: TextureAtlas {
            page_edge,
            pages,
            placements,
            uvs,
        },
    })
}
