//! Sampling triangle textures and vertex colours from the colour volume.

use std::collections::VecDeque;

use crate::error::Result;
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;
use crate::texture::TriangleFrame;
use crate::volume::{ColorVolume, VolumeConfig, UNOBSERVED_COLOR};

/// Baked texture of a single triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureMap {
    /// Texels per row.
    pub width: u32,
    /// Texel rows.
    pub height: u32,
    /// Row-major RGB texels.
    pub pixels: Vec<[u8; 3]>,
    /// True where the texel covers the triangle and received an observed
    /// colour sample; texels beyond the diagonal or filled by replication
    /// are false.
    pub valid: Vec<bool>,
}

impl TextureMap {
    /// RGB texel value.
    ///
    /// # Panics
    /// Panics when the texel is outside the map.
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        assert!(x < self.width && y < self.height, "texel outside map");
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Whether a texel holds a direct observed sample.
    ///
    /// # Panics
    /// Panics when the texel is outside the map.
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        assert!(x < self.width && y < self.height, "texel outside map");
        self.valid[y as usize * self.width as usize + x as usize]
    }
}

/// Clamps a point into the volume extent, absorbing the sub-millimetre
/// drift simplification can introduce at the volume border.
fn clamp_into(cfg: &VolumeConfig, p: Vec3) -> Vec3 {
    let mut out = p;
    for i in 0..3 {
        out[i] = out[i].clamp(cfg.origin[i], cfg.origin[i] + cfg.size_mm);
    }
    out
}

/// Bakes the texture map of one triangle from the colour volume.
///
/// Texels covering the triangle sample the volume at their world position
/// (clamped into the volume extent). Covered texels whose sample is
/// unobserved borrow the colour of the nearest observed texel; the half of
/// the grid beyond the diagonal replicates its row's last covered texel.
/// Both kinds of fill stay flagged invalid in the map's mask. A map with no
/// observed texel at all comes back magenta with an all-false mask.
pub fn bake_polygon_texture(vol: &ColorVolume, frame: &TriangleFrame) -> Result<TextureMap> {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut pixels = vec![[0u8; 3]; w * h];
    let mut valid = vec![false; w * h];

    for j in 0..frame.height {
        let last = frame.last_covered_column(j);
        for i in 0..=last {
            let p = clamp_into(vol.config(), frame.texel_world_position(i, j));
            let sample = vol.sample_color(p)?;
            let idx = j as usize * w + i as usize;
            pixels[idx] = quantize(sample.rgb);
            valid[idx] = sample.observed;
        }
    }

    fill_unobserved(&mut pixels, &valid, frame);
    for j in 0..frame.height {
        let last = frame.last_covered_column(j) as usize;
        let row = j as usize * w;
        for i in last + 1..w {
            pixels[row + i] = pixels[row + last];
        }
    }

    Ok(TextureMap {
        width: frame.width,
        height: frame.height,
        pixels,
        valid,
    })
}

/// Replaces unobserved covered texels with the colour of the nearest
/// observed texel, found by a breadth-first sweep over the grid. Leaves the
/// map untouched when nothing was observed.
fn fill_unobserved(pixels: &mut [[u8; 3]], valid: &[bool], frame: &TriangleFrame) {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut dist = vec![u32::MAX; w * h];
    let mut queue = VecDeque::new();
    for (i, &v) in valid.iter().enumerate() {
        if v {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    if queue.is_empty() {
        for j in 0..frame.height {
            let last = frame.last_covered_column(j) as usize;
            for i in 0..=last {
                pixels[j as usize * w + i] = quantize(UNOBSERVED_COLOR);
            }
        }
        return;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let d = dist[i];
        let mut visit = |nx: usize, ny: usize| {
            let n = ny * w + nx;
            if dist[n] == u32::MAX {
                dist[n] = d + 1;
                pixels[n] = pixels[i];
                queue.push_back(n);
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
}

fn quantize(rgb: [f64; 3]) -> [u8; 3] {
    [
        rgb[0].round().clamp(0.0, 255.0) as u8,
        rgb[1].round().clamp(0.0, 255.0) as u8,
        rgb[2].round().clamp(0.0, 255.0) as u8,
    ]
}

/// Paints the mesh by sampling the colour volume once per vertex.
///
/// This is the low-cost alternative to texture baking: appearance
/// resolution is tied to vertex density, so simplification washes out
/// detail. Vertices are clamped into the volume extent before sampling;
/// unobserved vertices turn magenta.
pub fn colored_vertex_texture(mesh: &TriangleMesh, vol: &ColorVolume) -> Result<TriangleMesh> {
    mesh.validate()?;
    let mut colors = Vec::with_capacity(mesh.vertices.len());
    for &v in &mesh.vertices {
        let sample = vol.sample_color(clamp_into(vol.config(), v))?;
        colors.push(sample.rgb);
    }
    let mut out = mesh.clone();
    out.colors = Some(colors);
    Ok(out)
}
