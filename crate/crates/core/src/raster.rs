//! 8-bit grayscale rasters with bilinear sampling and PNG/PGM I/O.

use crate::error::{Error, Result};
use std::path::Path;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "raster data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous pixel coordinates, where integer
    /// coordinates address pixel centers. Coordinates are clamped to the
    /// raster border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        p00 * (1.0 - fx) * (1.0 - fy) + p10 * fx * (1.0 - fy) + p01 * (1.0 - fx) * fy + p11 * fx * fy
    }

    /// Bilinear sample with reflective border handling (used by augmentation).
    pub fn sample_bilinear_reflect(&self, x: f64, y: f64) -> f64 {
        let xr = reflect_coord(x, self.width);
        let yr = reflect_coord(y, self.height);
        self.sample_bilinear(xr, yr)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        let var = self
            .data
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / self.data.len() as f64;
        var.sqrt()
    }

    /// Fraction of pixels that differ between two same-shape rasters.
    pub fn fraction_differing(&self, other: &Raster) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count();
        diff as f64 / self.data.len() as f64
    }

    /// Mean absolute per-pixel difference in gray levels.
    pub fn mean_abs_diff(&self, other: &Raster) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        sum / self.data.len() as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("raster dimensions match buffer");
        img.save(path)
            .map_err(|e| Error::format(path, format!("failed to encode image: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory(&bytes)
            .map_err(|e| Error::format(path, format!("failed to decode image: {e}")))?
            .to_luma8();
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.into_raw(),
        })
    }
}

/// Reflect a continuous coordinate into `[0, n-1]` (mirror padding).
fn reflect_coord(x: f64, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let hi = (n - 1) as f64;
    let period = 2.0 * hi;
    let mut t = x.rem_euclid(period);
    if t > hi {
        t = period - t;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_interpolates_between_pixels() {
        let r = Raster::from_vec(2, 1, vec![0, 100]).unwrap();
        assert_eq!(r.sample_bilinear(0.0, 0.0), 0.0);
        assert_eq!(r.sample_bilinear(1.0, 0.0), 100.0);
        assert!((r.sample_bilinear(0.5, 0.0) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_mirrors_at_borders() {
        assert_eq!(reflect_coord(-1.0, 10), 1.0);
        assert_eq!(reflect_coord(9.5, 10), 8.5);
        assert_eq!(reflect_coord(4.0, 10), 4.0);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let r = Raster::from_vec(3, 2, vec![0, 50, 100, 150, 200, 250]).unwrap();
        r.save(&path).unwrap();
        let back = Raster::load(&path).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn load_missing_file_names_path() {
        let err = Raster::load(Path::new("/nonexistent/image.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/image.png"));
    }
}
