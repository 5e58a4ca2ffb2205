//! Image sharpness metrics for comparing rendered snapshots.
//!
//! Texture quality is scored as the mean gradient magnitude of a
//! rendering: blurry or washed-out textures flatten intensity edges and
//! lower the score, while detail-preserving pipelines keep it high. The
//! score is only meaningful between renderings of the same scene from the
//! same viewpoint.

use crate::error::{Error, Result};
use crate::raster::RgbRaster;

/// Rec. 601 luma weight for red.
const LUMA_R: f64 = 0.299;
/// Rec. 601 luma weight for green.
const LUMA_G: f64 = 0.587;
/// Rec. 601 luma weight for blue.
const LUMA_B: f64 = 0.114;

/// Luma of one RGB triple.
fn luma(rgb: [u8; 3]) -> f64 {
    LUMA_R * f64::from(rgb[0]) + LUMA_G * f64::from(rgb[1]) + LUMA_B * f64::from(rgb[2])
}

/// Mean gradient magnitude of an image.
///
/// Converts to luma, takes central differences in x and y over the
/// interior (the one-pixel border has no centred neighbourhood and is
/// excluded), and averages the Euclidean gradient norm. Needs at least a
/// 3x3 image.
pub fn mean_gradient_magnitude(img: &RgbRaster) -> Result<f64> {
    if img.width < 3 || img.height < 3 {
        return Err(Error::InvalidConfig(format!(
            "gradient needs at least a 3x3 image, got {}x{}",
            img.width, img.height
        )));
    }
    let w = img.width as usize;
    let h = img.height as usize;
    let mut lum = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            lum[y * w + x] = luma(img.pixel(x as u32, y as u32));
        }
    }
    let mut total = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (lum[y * w + x + 1] - lum[y * w + x - 1]) / 2.0;
            let gy = (lum[(y + 1) * w + x] - lum[(y - 1) * w + x]) / 2.0;
            total += (gx * gx + gy * gy).sqrt();
        }
    }
    Ok(total / ((w - 2) * (h - 2)) as f64)
}

/// Crops a rectangle out of a raster.
///
/// Useful for scoring a region of interest instead of a whole snapshot.
pub fn crop(img: &RgbRaster, x: u32, y: u32, width: u32, height: u32) -> Result<RgbRaster> {
    if x.checked_add(width).is_none_or(|r| r > img.width)
        || y.checked_add(height).is_none_or(|b| b > img.height)
    {
        return Err(Error::OutOfBounds(format!(
            "crop {width}x{height}+{x}+{y} exceeds {}x{} image",
            img.width, img.height
        )));
    }
    let mut out = RgbRaster::new(width, height)?;
    for j in 0..height {
        for i in 0..width {
            out.set_pixel(i, j, img.pixel(x + i, y + j));
        }
    }
    Ok(out)
}
