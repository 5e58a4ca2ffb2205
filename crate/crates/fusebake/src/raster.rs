//! Image containers shared by rendering, fusion, and texturing.

use crate::error::{Error, Result};

/// Dense depth raster in millimetres. Zero marks an invalid measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    /// Width in pixels.
    pub width: u32,
    /// Height in pixels.
    pub height: u32,
    /// Row-major depth values, `width * height` entries.
    pub data: Vec<f32>,
}

impl DepthMap {
    /// Creates an all-invalid depth map.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        })
    }

    /// Wraps existing data, checking its length.
    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected: format!("{} depth values", width as usize * height as usize),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Depth at an integer pixel, or `None` outside the image or where the
    /// measurement is invalid.
    pub fn depth_at(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return None;
        }
        let d = self.data[y as usize * self.width as usize + x as usize];
        if d > 0.0 && d.is_finite() {
            Some(f64::from(d))
        } else {
            None
        }
    }

    /// Sets the depth at an integer pixel.
    ///
    /// # Panics
    /// Panics when the pixel is outside the image.
    pub fn set(&mut self, x: u32, y: u32, depth: f32) {
        assert!(x < self.width && y < self.height, "pixel outside depth map");
        self.data[y as usize * self.width as usize + x as usize] = depth;
    }
}

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster {
    /// Width in pixels.
    pub width: u32,
    /// Height in pixels.
    pub height: u32,
    /// Row-major RGB triples, `3 * width * height` bytes.
    pub data: Vec<u8>,
}

impl RgbRaster {
    /// Creates a black raster.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![0; 3 * width as usize * height as usize],
        })
    }

    /// Wraps existing data, checking its length.
    pub fn from_data(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != 3 * width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rgb bytes", 3 * width as usize * height as usize),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// RGB triple at an integer pixel, clamped to the image border.
    pub fn pixel_clamped(&self, x: i64, y: i64) -> [u8; 3] {
        let x = x.clamp(0, i64::from(self.width) - 1) as usize;
        let y = y.clamp(0, i64::from(self.height) - 1) as usize;
        let i = 3 * (y * self.width as usize + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// RGB triple at an integer pixel.
    ///
    /// # Panics
    /// Panics when the pixel is outside the image.
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        assert!(x < self.width && y < self.height, "pixel outside raster");
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Sets the RGB triple at an integer pixel.
    ///
    /// # Panics
    /// Panics when the pixel is outside the image.
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        assert!(x < self.width && y < self.height, "pixel outside raster");
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear sample at a continuous pixel coordinate, with integer
    /// coordinates at pixel centers. Samples are clamped to the border.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> [f64; 3] {
        let x0 = u.floor();
        let y0 = v.floor();
        let fx = u - x0;
        let fy = v - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let p00 = self.pixel_clamped(x0, y0);
        let p10 = self.pixel_clamped(x0 + 1, y0);
        let p01 = self.pixel_clamped(x0, y0 + 1);
        let p11 = self.pixel_clamped(x0 + 1, y0 + 1);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
            let bot = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
            out[c] = top * (1.0 - fy) + bot * fy;
        }
        out
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig(format!(
            "raster dimensions must be nonzero, got {width}x{height}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn depth_map_treats_zero_as_invalid() {
        let mut d = DepthMap::new(4, 3).unwrap();
        assert_eq!(d.depth_at(1, 1), None);
        d.set(1, 1, 750.5);
        assert_eq!(d.depth_at(1, 1), Some(750.5));
        assert_eq!(d.depth_at(-1, 0), None);
        assert_eq!(d.depth_at(4, 0), None);
    }

    #[test]
    fn rgb_bilinear_midpoint_blends_neighbours() {
        let mut img = RgbRaster::new(2, 1).unwrap();
        img.set_pixel(0, 0, [100, 0, 200]);
        img.set_pixel(1, 0, [200, 0, 100]);
        let s = img.sample_bilinear(0.5, 0.0);
        assert_relative_eq!(s[0], 150.0, epsilon = 1e-12);
        assert_relative_eq!(s[2], 150.0, epsilon = 1e-12);
    }

    #[test]
    fn rgb_bilinear_at_center_returns_pixel() {
        let mut img = RgbRaster::new(3, 3).unwrap();
        img.set_pixel(1, 1, [7, 8, 9]);
        let s = img.sample_bilinear(1.0, 1.0);
        assert_eq!([s[0] as u8, s[1] as u8, s[2] as u8], [7, 8, 9]);
    }

    #[test]
    fn from_data_checks_length() {
        assert!(DepthMap::from_data(2, 2, vec![0.0; 3]).is_err());
        assert!(RgbRaster::from_data(2, 2, vec![0; 11]).is_err());
    }
}
