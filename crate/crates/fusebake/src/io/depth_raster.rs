//! Binary depth raster files.
//!
//! Layout, all little-endian: magic `FBDP`, u32 version, u32 width, u32
//! height, then `width * height` u16 depths in millimetres, row-major.
//! Zero is an invalid measurement. Fractional depths round to the nearest
//! millimetre on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::DepthMap;

const MAGIC: &[u8; 4] = b"FBDP";
const VERSION: u32 = 1;

/// Writes a depth map. Depths beyond 65535 mm saturate.
pub fn write_depth_raster(path: &Path, map: &DepthMap) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&map.width.to_le_bytes())?;
    out.write_all(&map.height.to_le_bytes())?;
    let mut bytes = Vec::with_capacity(2 * map.data.len());
    for &d in &map.data {
        let mm = if d.is_finite() && d > 0.0 {
            d.round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        bytes.extend_from_slice(&mm.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Reads a depth map written by [`write_depth_raster`].
pub fn read_depth_raster(path: &Path) -> Result<DepthMap> {
    let mut input = BufReader::new(File::open(path)?);
    let bad = |reason: &str| Error::format(path.display().to_string(), reason);

    let mut head = [0u8; 16];
    input.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[0..4] != MAGIC {
        return Err(bad("bad magic, not a depth raster"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let width = u32::from_le_bytes(head[8..12].try_into().unwrap());
    let height = u32::from_le_bytes(head[12..16].try_into().unwrap());
    if width == 0 || height == 0 || width > 1 << 16 || height > 1 << 16 {
        return Err(bad("unreasonable raster dimensions"));
    }
    let n = width as usize * height as usize;
    let mut bytes = vec![0u8; 2 * n];
    input.read_exact(&mut bytes).map_err(|_| bad("truncated depth data"))?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after depth data"));
    }
    let data = bytes
        .chunks_exact(2)
        .map(|c| f32::from(u16::from_le_bytes([c[0], c[1]])))
        .collect();
    DepthMap::from_data(width, height, data)
}
