//! Binary voxel volume files.
//!
//! Both volume kinds share a little-endian header: a four-byte magic
//! (`FBVG` for distance volumes, `FBVC` for colour volumes), a u32
//! version, then the full volume configuration so a later stage can
//! rebuild the grid exactly: geometry dim, colour dim, cube size, origin,
//! truncation, colour gate sigma, weight gate, weight cap (all f64 where
//! fractional), and the colour search radius.
//!
//! The payload is one f32 record per voxel in x-fastest order: distance
//! volumes store (value, weight), colour volumes (r, g, b, weight).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::volume::{ColorVolume, TsdfVolume, VolumeConfig};

const MAGIC_GEO: &[u8; 4] = b"FBVG";
const MAGIC_COLOR: &[u8; 4] = b"FBVC";
const VERSION: u32 = 1;

fn write_header(out: &mut impl Write, magic: &[u8; 4], config: &VolumeConfig) -> Result<()> {
    out.write_all(magic)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&config.geo_dim.to_le_bytes())?;
    out.write_all(&config.color_dim.to_le_bytes())?;
    out.write_all(&config.size_mm.to_le_bytes())?;
    for c in 0..3 {
        out.write_all(&config.origin[c].to_le_bytes())?;
    }
    out.write_all(&config.truncation_mm.to_le_bytes())?;
    out.write_all(&config.sigma_mm.to_le_bytes())?;
    out.write_all(&config.weight_gate.to_le_bytes())?;
    out.write_all(&f64::from(config.max_depth_weight).to_le_bytes())?;
    out.write_all(&config.color_search_radius.to_le_bytes())?;
    Ok(())
}

fn read_header(input: &mut impl Read, magic: &[u8; 4], path: &Path) -> Result<VolumeConfig> {
    let bad = |reason: &str| Error::format(path.display().to_string(), reason);
    let mut head = [0u8; 4 + 4 + 4 + 4 + 8 * 8 + 4];
    input.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[0..4] != magic {
        return Err(bad("bad magic for this volume kind"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let u = |at: usize| u32::from_le_bytes(head[at..at + 4].try_into().unwrap());
    let f = |at: usize| f64::from_le_bytes(head[at..at + 8].try_into().unwrap());
    let config = VolumeConfig {
        geo_dim: u(8),
        color_dim: u(12),
        size_mm: f(16),
        origin: Vec3::new(f(24), f(32), f(40)),
        truncation_mm: f(48),
        sigma_mm: f(56),
        weight_gate: f(64),
        max_depth_weight: f(72) as f32,
        color_search_radius: u(80),
    };
    config
        .validate()
        .map_err(|e| bad(&format!("invalid stored config: {e}")))?;
    Ok(config)
}

fn read_payload(input: &mut impl Read, floats: usize, path: &Path) -> Result<Vec<f32>> {
    let bad = |reason: &str| Error::format(path.display().to_string(), reason);
    let mut bytes = vec![0u8; 4 * floats];
    input.read_exact(&mut bytes).map_err(|_| bad("truncated voxel data"))?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after voxel data"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes a distance volume with its weights.
pub fn write_tsdf_volume(path: &Path, vol: &TsdfVolume) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_header(&mut out, MAGIC_GEO, vol.config())?;
    let dim = vol.dim() as usize;
    let mut bytes = Vec::with_capacity(8 * dim * dim * dim);
    for i in 0..dim * dim * dim {
        let (t, w) = vol.voxel_by_index(i);
        bytes.extend_from_slice(&t.to_le_bytes());
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Reads a distance volume written by [`write_tsdf_volume`].
pub fn read_tsdf_volume(path: &Path) -> Result<TsdfVolume> {
    let mut input = BufReader::new(File::open(path)?);
    let config = read_header(&mut input, MAGIC_GEO, path)?;
    let dim = config.geo_dim as usize;
    let floats = read_payload(&mut input, 2 * dim * dim * dim, path)?;
    let mut vol = TsdfVolume::new(config)?;
    for (i, pair) in floats.chunks_exact(2).enumerate() {
        vol.set_voxel_by_index(i, pair[0], pair[1]);
    }
    Ok(vol)
}

/// Writes a colour volume with its weights.
pub fn write_color_volume(path: &Path, vol: &ColorVolume) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_header(&mut out, MAGIC_COLOR, vol.config())?;
    let dim = vol.dim() as usize;
    let mut bytes = Vec::with_capacity(16 * dim * dim * dim);
    for i in 0..dim * dim * dim {
        for v in vol.voxel_by_index(i) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Reads a colour volume written by [`write_color_volume`].
pub fn read_color_volume(path: &Path) -> Result<ColorVolume> {
    let mut input = BufReader::new(File::open(path)?);
    let config = read_header(&mut input, MAGIC_COLOR, path)?;
    let dim = config.color_dim as usize;
    let floats = read_payload(&mut input, 4 * dim * dim * dim, path)?;
    let mut vol = ColorVolume::new(config)?;
    for (i, quad) in floats.chunks_exact(4).enumerate() {
        vol.set_voxel_by_index(i, [quad[0], quad[1], quad[2], quad[3]]);
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> VolumeConfig {
        VolumeConfig::new(6, 8, 300.0, Vec3::new(-150.0, -150.0, 400.0)).unwrap()
    }

    #[test]
    fn tsdf_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.fbvg");
        let mut vol = TsdfVolume::new(small_config()).unwrap();
        vol.fill_from_sdf(|p| (p - Vec3::new(0.0, 0.0, 550.0)).norm() - 80.0);
        write_tsdf_volume(&path, &vol).unwrap();
        let back = read_tsdf_volume(&path).unwrap();
        assert_eq!(back.config(), vol.config());
        for i in 0..6 * 6 * 6 {
            assert_eq!(back.voxel_by_index(i), vol.voxel_by_index(i));
        }
    }

    #[test]
    fn color_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.fbvc");
        let mut vol = ColorVolume::new(small_config()).unwrap();
        vol.fill_from_fn(|p| [p.x.abs() % 255.0, p.y.abs() % 255.0, 40.0]);
        write_color_volume(&path, &vol).unwrap();
        let back = read_color_volume(&path).unwrap();
        assert_eq!(back.config(), vol.config());
        for i in 0..8 * 8 * 8 {
            assert_eq!(back.voxel_by_index(i), vol.voxel_by_index(i));
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.fbvg");
        let vol = TsdfVolume::new(small_config()).unwrap();
        write_tsdf_volume(&path, &vol).unwrap();
        assert!(read_color_volume(&path).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.fbvg");
        let vol = TsdfVolume::new(small_config()).unwrap();
        write_tsdf_volume(&path, &vol).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_tsdf_volume(&path).is_err());
    }
}
