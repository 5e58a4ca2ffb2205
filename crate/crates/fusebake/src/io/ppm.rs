//! Binary PPM (P6) image files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::RgbRaster;

/// Writes a raster as a binary PPM file.
pub fn write_ppm(path: &Path, img: &RgbRaster) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{} {}\n255\n", img.width, img.height)?;
    out.write_all(&img.data)?;
    out.flush()?;
    Ok(())
}

/// Reads a binary PPM file.
///
/// Accepts whitespace and `#` comments between header tokens, as the
/// format allows. Only 8-bit files (maxval 255) are supported.
pub fn read_ppm(path: &Path) -> Result<RgbRaster> {
    let mut input = BufReader::new(File::open(path)?);
    let bad = |reason: &str| Error::format(path.display().to_string(), reason);

    let mut magic = [0u8; 2];
    input.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != b"P6" {
        return Err(bad("not a P6 image"));
    }
    let width = read_header_number(&mut input).map_err(|_| bad("missing width"))?;
    let height = read_header_number(&mut input).map_err(|_| bad("missing height"))?;
    let maxval = read_header_number(&mut input).map_err(|_| bad("missing maxval"))?;
    if maxval != 255 {
        return Err(bad("only 8-bit images (maxval 255) are supported"));
    }
    if width == 0 || height == 0 || width > 1 << 16 || height > 1 << 16 {
        return Err(bad("unreasonable image dimensions"));
    }
    let mut data = vec![0u8; 3 * width as usize * height as usize];
    input.read_exact(&mut data).map_err(|_| bad("truncated pixel data"))?;
    RgbRaster::from_data(width, height, data)
}

/// Reads one whitespace-delimited decimal number, skipping comments. The
/// single whitespace byte after the number is consumed.
fn read_header_number(input: &mut impl Read) -> std::io::Result<u32> {
    let mut byte = [0u8; 1];
    let mut value: Option<u32> = None;
    loop {
        input.read_exact(&mut byte)?;
        match byte[0] {
            b'#' => {
                // skip to end of line
                while byte[0] != b'\n' {
                    input.read_exact(&mut byte)?;
                }
            }
            b'0'..=b'9' => {
                let d = u32::from(byte[0] - b'0');
                value = Some(value.unwrap_or(0).saturating_mul(10).saturating_add(d));
            }
            b' ' | b'\t' | b'\r' | b'\n' => {
                if let Some(v) = value {
                    return Ok(v);
                }
            }
            _ => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    "unexpected byte in header",
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut img = RgbRaster::new(5, 3).unwrap();
        for y in 0..3 {
            for x in 0..5 {
                img.set_pixel(x, y, [x as u8 * 40, y as u8 * 80, 255]);
            }
        }
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        std::fs::write(&path, b"P6\n# made by hand\n2 1\n255\n\x01\x02\x03\x04\x05\x06")
            .unwrap();
        let img = read_ppm(&path).unwrap();
        assert_eq!(img.width, 2);
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p3 = dir.path().join("ascii.ppm");
        std::fs::write(&p3, b"P3\n1 1\n255\n1 2 3\n").unwrap();
        assert!(read_ppm(&p3).is_err());

        let short = dir.path().join("short.ppm");
        std::fs::write(&short, b"P6\n4 4\n255\nxy").unwrap();
        assert!(read_ppm(&short).is_err());
    }
}
