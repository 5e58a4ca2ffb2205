//! Wavefront OBJ import and export.
//!
//! Two mesh flavours are supported:
//!
//! - Atlas-textured meshes: an OBJ with texture coordinates, an MTL with
//!   one material per atlas page, and the pages as PPM images next to it.
//! - Vertex-coloured meshes: the common unofficial extension that appends
//!   `r g b` in `[0, 1]` to each `v` line.
//!
//! OBJ texture coordinates put `v = 0` at the bottom of the image while
//! atlas rows count from the top, so `v` flips on both paths. Numbers are
//! written in shortest round-trip form; positions survive a round trip
//! bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;
use crate::raster::RgbRaster;
use crate::texture::{Placement, TextureAtlas, TexturedMesh};

use super::ppm::{read_ppm, write_ppm};

/// Writes a textured mesh as `stem.obj` plus `stem.mtl` plus one
/// `stem_pageN.ppm` per atlas page, all next to `obj_path`.
pub fn export_textured_obj(obj_path: &Path, textured: &TexturedMesh) -> Result<()> {
    let mesh = &textured.mesh;
    let atlas = &textured.atlas;
    mesh.validate()?;
    if atlas.uvs.len() != mesh.triangles.len() || atlas.placements.len() != mesh.triangles.len() {
        return Err(Error::InvalidMesh(
            "atlas does not cover every triangle".into(),
        ));
    }
    let stem = obj_stem(obj_path)?;
    let dir = obj_path.parent().unwrap_or(Path::new(""));

    let mtl_name = format!("{stem}.mtl");
    let mut mtl = BufWriter::new(File::create(dir.join(&mtl_name))?);
    for (i, page) in atlas.pages.iter().enumerate() {
        let image_name = format!("{stem}_page{i}.ppm");
        write_ppm(&dir.join(&image_name), page)?;
        writeln!(mtl, "newmtl page{i}")?;
        writeln!(mtl, "Kd 1 1 1")?;
        writeln!(mtl, "map_Kd {image_name}")?;
    }
    mtl.flush()?;

    let mut obj = BufWriter::new(File::create(obj_path)?);
    writeln!(obj, "mtllib {mtl_name}")?;
    for v in &mesh.vertices {
        writeln!(obj, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for corners in &atlas.uvs {
        for uv in corners {
            writeln!(obj, "vt {} {}", uv[0], 1.0 - uv[1])?;
        }
    }
    let mut current_page = None;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let page = atlas.placements[t].page;
        if current_page != Some(page) {
            writeln!(obj, "usemtl page{page}")?;
            current_page = Some(page);
        }
        let vt = 3 * t as u64;
        writeln!(
            obj,
            "f {}/{} {}/{} {}/{}",
            tri[0] + 1,
            vt + 1,
            tri[1] + 1,
            vt + 2,
            tri[2] + 1,
            vt + 3
        )?;
    }
    obj.flush()?;
    Ok(())
}

/// Reads a textured mesh written by [`export_textured_obj`].
///
/// The texture coordinates of each face must describe the axis-aligned
/// texel rectangle the exporter produces; arbitrary OBJ UV layouts are
/// rejected.
pub fn import_textured_obj(obj_path: &Path) -> Result<TexturedMesh> {
    let dir = obj_path.parent().unwrap_or(Path::new(""));
    let text = std::fs::read_to_string(obj_path)?;
    let bad = |reason: String| Error::Format {
        path: obj_path.display().to_string(),
        reason,
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut file_uvs: Vec<[f64; 2]> = Vec::new();
    // (vertex ids, uv ids, material id) per face
    let mut faces: Vec<([u64; 3], [u64; 3], usize)> = Vec::new();
    let mut mtl_file: Option<String> = None;
    let mut material_names: Vec<String> = Vec::new();
    let mut current_material: Option<usize> = None;

    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_ascii_whitespace();
        let lineno = lineno + 1;
        match fields.next() {
            Some("mtllib") => {
                mtl_file = Some(
                    fields
                        .next()
                        .ok_or_else(|| bad(format!("line {lineno}: mtllib without a file")))?
                        .to_string(),
                );
            }
            Some("usemtl") => {
                let name = fields
                    .next()
                    .ok_or_else(|| bad(format!("line {lineno}: usemtl without a name")))?;
                let id = material_names.iter().position(|n| n == name).unwrap_or_else(|| {
                    material_names.push(name.to_string());
                    material_names.len() - 1
                });
                current_material = Some(id);
            }
            Some("v") => {
                let nums = parse_floats(fields, lineno, &bad)?;
                if nums.len() != 3 {
                    return Err(bad(format!(
                        "line {lineno}: textured mesh vertices need exactly x y z"
                    )));
                }
                vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
            }
            Some("vt") => {
                let nums = parse_floats(fields, lineno, &bad)?;
                if nums.len() < 2 {
                    return Err(bad(format!("line {lineno}: vt needs u and v")));
                }
                file_uvs.push([nums[0], nums[1]]);
            }
            Some("f") => {
                let mut vids = [0u64; 3];
                let mut tids = [0u64; 3];
                for slot in 0..3 {
                    let corner = fields
                        .next()
                        .ok_or_else(|| bad(format!("line {lineno}: face needs three corners")))?;
                    let mut parts = corner.split('/');
                    vids[slot] = parse_index(parts.next(), lineno, &bad)?;
                    tids[slot] = parse_index(parts.next(), lineno, &bad)?;
                }
                if fields.next().is_some() {
                    return Err(bad(format!("line {lineno}: only triangles are supported")));
                }
                let material = current_material
                    .ok_or_else(|| bad(format!("line {lineno}: face before any usemtl")))?;
                faces.push((vids, tids, material));
            }
            _ => {}
        }
    }

    // load the page images named by the MTL, in material order
    let mtl_file = mtl_file.ok_or_else(|| bad("no mtllib line".into()))?;
    let images = read_mtl_images(&dir.join(&mtl_file))?;
    let mut pages: Vec<RgbRaster> = Vec::new();
    for name in &material_names {
        let image = images
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, img)| img.clone())
            .ok_or_else(|| bad(format!("material {name} has no image in {mtl_file}")))?;
        pages.push(read_ppm(&dir.join(image))?);
    }
    let page_edge = pages
        .first()
        .map(|p| p.width)
        .ok_or_else(|| bad("mesh uses no texture pages".into()))?;
    for p in &pages {
        if p.width != page_edge || p.height != page_edge {
            return Err(bad("atlas pages must be square and equally sized".into()));
        }
    }

    let mut triangles = Vec::with_capacity(faces.len());
    let mut placements = Vec::with_capacity(faces.len());
    let mut uvs = Vec::with_capacity(faces.len());
    for (vids, tids, material) in &faces {
        let mut tri = [0u32; 3];
        let mut corner_uv = [[0.0f64; 2]; 3];
        for slot in 0..3 {
            let vi = vids[slot];
            if vi == 0 || vi > vertices.len() as u64 {
                return Err(bad(format!("vertex index {vi} out of range")));
            }
            tri[slot] = (vi - 1) as u32;
            let ti = tids[slot];
            if ti == 0 || ti > file_uvs.len() as u64 {
                return Err(bad(format!("texture index {ti} out of range")));
            }
            let [u, v] = file_uvs[(ti - 1) as usize];
            corner_uv[slot] = [u, 1.0 - v];
        }
        let placement = placement_from_uvs(&corner_uv, *material as u32, page_edge)
            .map_err(|reason| bad(reason))?;
        // regenerate the corner UVs from the recovered rectangle so a
        // round trip reproduces them bit-exactly
        uvs.push(TextureAtlas::corner_uvs(&placement, page_edge));
        placements.push(placement);
        triangles.push(tri);
    }

    let mesh = TriangleMesh {
        vertices,
        triangles,
        colors: None,
    };
    mesh.validate()?;
    Ok(TexturedMesh {
        mesh,
        atlas: TextureAtlas {
            page_edge,
            pages,
            placements,
            uvs,
        },
    })
}

/// Writes an untextured mesh as an OBJ, using `v x y z r g b` lines when
/// the mesh carries vertex colours and plain `v x y z` lines otherwise.
pub fn export_mesh_obj(obj_path: &Path, mesh: &TriangleMesh) -> Result<()> {
    mesh.validate()?;
    let mut obj = BufWriter::new(File::create(obj_path)?);
    match &mesh.colors {
        Some(colors) => {
            for (v, c) in mesh.vertices.iter().zip(colors) {
                writeln!(
                    obj,
                    "v {} {} {} {} {} {}",
                    v.x,
                    v.y,
                    v.z,
                    c[0] / 255.0,
                    c[1] / 255.0,
                    c[2] / 255.0
                )?;
            }
        }
        None => {
            for v in &mesh.vertices {
                writeln!(obj, "v {} {} {}", v.x, v.y, v.z)?;
            }
        }
    }
    for tri in &mesh.triangles {
        writeln!(obj, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1)?;
    }
    obj.flush()?;
    Ok(())
}

/// Reads a plain or vertex-coloured OBJ mesh.
///
/// Vertices must be all plain `x y z` or all coloured `x y z r g b`;
/// faces must be triangles without texture references.
pub fn import_mesh_obj(obj_path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(obj_path)?;
    let bad = |reason: String| Error::Format {
        path: obj_path.display().to_string(),
        reason,
    };
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_ascii_whitespace();
        let lineno = lineno + 1;
        match fields.next() {
            Some("v") => {
                let nums = parse_floats(fields, lineno, &bad)?;
                match nums.len() {
                    3 => {}
                    6 => colors.push([nums[3] * 255.0, nums[4] * 255.0, nums[5] * 255.0]),
                    n => {
                        return Err(bad(format!(
                            "line {lineno}: expected 3 or 6 vertex numbers, got {n}"
                        )))
                    }
                }
                vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
                if !colors.is_empty() && colors.len() != vertices.len() {
                    return Err(bad(format!(
                        "line {lineno}: mix of coloured and plain vertices"
                    )));
                }
            }
            Some("f") => {
                let mut tri = [0u32; 3];
                for slot in 0..3 {
                    let corner = fields
                        .next()
                        .ok_or_else(|| bad(format!("line {lineno}: face needs three corners")))?;
                    let vi = parse_index(corner.split('/').next(), lineno, &bad)?;
                    if vi == 0 || vi > vertices.len() as u64 {
                        return Err(bad(format!("line {lineno}: vertex index {vi} out of range")));
                    }
                    tri[slot] = (vi - 1) as u32;
                }
                if fields.next().is_some() {
                    return Err(bad(format!("line {lineno}: only triangles are supported")));
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    let mesh = TriangleMesh {
        vertices,
        triangles,
        colors: if colors.is_empty() { None } else { Some(colors) },
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Recovers the texel rectangle whose corner-texel centers produce these
/// UVs, or explains why none does.
fn placement_from_uvs(
    uv: &[[f64; 2]; 3],
    page: u32,
    page_edge: u32,
) -> std::result::Result<Placement, String> {
    let edge = f64::from(page_edge);
    let x = uv[0][0] * edge - 0.5;
    let y = uv[0][1] * edge - 0.5;
    let w = uv[1][0] * edge + 0.5 - x;
    let h = uv[2][1] * edge + 0.5 - y;
    let (xi, yi, wi, hi) = (x.round(), y.round(), w.round(), h.round());
    if (x - xi).abs() > 1e-6
        || (y - yi).abs() > 1e-6
        || (w - wi).abs() > 1e-6
        || (h - hi).abs() > 1e-6
    {
        return Err(format!(
            "face UVs do not sit on texel centers of a {page_edge}-texel page"
        ));
    }
    if xi < 0.0 || yi < 0.0 || wi < 2.0 || hi < 2.0 {
        return Err("face UVs describe a degenerate texture rectangle".into());
    }
    let placement = Placement {
        page,
        x: xi as u32,
        y: yi as u32,
        w: wi as u32,
        h: hi as u32,
    };
    if placement.x + placement.w > page_edge || placement.y + placement.h > page_edge {
        return Err("face texture rectangle leaves the page".into());
    }
    let expect = TextureAtlas::corner_uvs(&placement, page_edge);
    for (got, want) in uv.iter().zip(&expect) {
        if (got[0] - want[0]).abs() > 1e-6 || (got[1] - want[1]).abs() > 1e-6 {
            return Err("face UVs are not an axis-aligned texel rectangle".into());
        }
    }
    Ok(placement)
}

/// Material name to image file pairs from an MTL file, in file order.
fn read_mtl_images(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |reason: String| Error::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_ascii_whitespace();
        match fields.next() {
            Some("newmtl") => {
                let name = fields
                    .next()
                    .ok_or_else(|| bad(format!("line {}: newmtl without a name", lineno + 1)))?;
                out.push((name.to_string(), String::new()));
            }
            Some("map_Kd") => {
                let image = fields
                    .next()
                    .ok_or_else(|| bad(format!("line {}: map_Kd without a file", lineno + 1)))?;
                let entry = out
                    .last_mut()
                    .ok_or_else(|| bad(format!("line {}: map_Kd before newmtl", lineno + 1)))?;
                entry.1 = image.to_string();
            }
            _ => {}
        }
    }
    Ok(out)
}

fn obj_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::format(path.display().to_string(), "path has no usable file stem"))
}

fn parse_floats<'a>(
    fields: impl Iterator<Item = &'a str>,
    lineno: usize,
    bad: &impl Fn(String) -> Error,
) -> Result<Vec<f64>> {
    fields
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| bad(format!("line {lineno}: bad number {f:?}")))
        })
        .collect()
}

fn parse_index(
    field: Option<&str>,
    lineno: usize,
    bad: &impl Fn(String) -> Error,
) -> Result<u64> {
    field
        .filter(|f| !f.is_empty())
        .ok_or_else(|| bad(format!("line {lineno}: missing index")))?
        .parse::<u64>()
        .map_err(|_| bad(format!("line {lineno}: bad index")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::texture::texture_mesh;
    use crate::volume::{ColorVolume, VolumeConfig};

    fn sample_textured() -> TexturedMesh {
        let config = VolumeConfig::new(8, 16, 400.0, Vec3::new(-200.0, -200.0, -200.0)).unwrap();
        let mut vol = ColorVolume::new(config).unwrap();
        vol.fill_from_fn(|p| [p.x.rem_euclid(255.0), p.y.rem_euclid(255.0), 128.0]);
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::new(-120.0, -80.0, 10.0),
                Vec3::new(130.0, -60.0, -20.0),
                Vec3::new(15.0, 140.0, 5.0),
                Vec3::new(160.0, 120.0, -40.0),
            ],
            triangles: vec![[0, 1, 2], [1, 3, 2]],
            colors: None,
        };
        texture_mesh(&mesh, &vol, 8.0, 64).unwrap()
    }

    #[test]
    fn textured_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.obj");
        let textured = sample_textured();
        export_textured_obj(&path, &textured).unwrap();
        let back = import_textured_obj(&path).unwrap();
        assert_eq!(back.mesh.vertices, textured.mesh.vertices);
        assert_eq!(back.mesh.triangles, textured.mesh.triangles);
        assert_eq!(back.atlas.page_edge, textured.atlas.page_edge);
        assert_eq!(back.atlas.pages.len(), textured.atlas.pages.len());
        for (a, b) in back.atlas.pages.iter().zip(&textured.atlas.pages) {
            assert_eq!(a.data, b.data);
        }
        assert_eq!(back.atlas.placements, textured.atlas.placements);
        assert_eq!(back.atlas.uvs, textured.atlas.uvs);
    }

    #[test]
    fn vertex_color_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("colored.obj");
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::new(0.125, -3.5, 4.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(0.0, 10.0, 1e-3),
            ],
            triangles: vec![[0, 1, 2]],
            colors: Some(vec![
                [255.0, 0.0, 128.0],
                [0.0, 64.0, 255.0],
                [17.0, 200.0, 3.0],
            ]),
        };
        export_mesh_obj(&path, &mesh).unwrap();
        let back = import_mesh_obj(&path).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.triangles, mesh.triangles);
        let got = back.colors.unwrap();
        for (g, w) in got.iter().zip(mesh.colors.as_ref().unwrap()) {
            for c in 0..3 {
                assert!((g[c] - w[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn plain_mesh_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.obj");
        let mesh = TriangleMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            triangles: vec![[0, 1, 2]],
            colors: None,
        };
        export_mesh_obj(&path, &mesh).unwrap();
        let back = import_mesh_obj(&path).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.colors, None);
    }

    #[test]
    fn malformed_objs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.obj");

        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").unwrap();
        assert!(import_mesh_obj(&path).is_err());

        std::fs::write(&path, "v 0 0 0 1 0\nf 1 1 1\n").unwrap();
        assert!(import_mesh_obj(&path).is_err());

        // textured import requires an mtllib
        std::fs::write(&path, "v 0 0 0\nvt 0 0\nf 1/1 1/1 1/1\n").unwrap();
        assert!(import_textured_obj(&path).is_err());
    }

    #[test]
    fn arbitrary_uv_layouts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("skew.obj");
        let mut img = RgbRaster::new(16, 16).unwrap();
        img.set_pixel(0, 0, [1, 2, 3]);
        write_ppm(&dir.path().join("skew_page0.ppm"), &img).unwrap();
        std::fs::write(
            dir.path().join("skew.mtl"),
            "newmtl page0\nmap_Kd skew_page0.ppm\n",
        )
        .unwrap();
        std::fs::write(
            &path,
            "mtllib skew.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\n\
             vt 0.1 0.2\nvt 0.9 0.3\nvt 0.4 0.8\n\
             usemtl page0\nf 1/1 2/2 3/3\n",
        )
        .unwrap();
        assert!(import_textured_obj(&path).is_err());
    }
}
