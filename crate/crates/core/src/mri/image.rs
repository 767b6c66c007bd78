use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub pixels: Array2<f64>,
}

impl GrayImage {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (h, w) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidInput("image must have at least one pixel".into()));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite pixel value {bad}")));
        }
        Ok(GrayImage {
            pixels: pixels.as_standard_layout().into_owned(),
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.pixels.as_slice().expect("standard layout")
    }

    /// Reads any 8- or 16-bit grayscale-convertible image (PGM, PNG).
    pub fn read(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::parse(path, e))?.into_luma16();
        let (w, h) = img.dimensions();
        let pixels = Array2::from_shape_vec((h as usize, w as usize), img.into_raw())
            .expect("luma buffer matches dimensions")
            .mapv(|v| f64::from(v) / f64::from(u16::MAX));
        GrayImage::new(pixels)
    }

    /// Writes an 8-bit image; the format follows the extension (`.pgm`, `.png`).
    /// Values are clamped to `[0, 1]`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let buf = image::GrayImage::from_raw(self.width() as u32, self.height() as u32, raw).expect("buffer size");
        buf.save(path).map_err(|e| Error::parse(path, e))
    }

    pub fn rmse(&self, other: &GrayImage) -> Result<f64> {
        if self.pixels.dim() != other.pixels.dim() {
            return Err(Error::InvalidInput(format!(
                "image sizes differ: {:?} vs {:?}",
                self.pixels.dim(),
                other.pixels.dim()
            )));
        }
        let se: f64 = self.pixels.iter().zip(&other.pixels).map(|(a, b)| (a - b).powi(2)).sum();
        Ok((se / self.len() as f64).sqrt())
    }
}

/// Bilinear interpolation on a pixel-center grid: output pixel `(i, j)`
/// samples the input at `((i + ½)·H/H' − ½, (j + ½)·W/W' − ½)`, clamped to
/// the image.
pub fn bilinear_resize(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidInput("output size must be at least 1×1".into()));
    }
    let (h, w) = img.pixels.dim();
    let axis = |out: usize, len: usize| -> Vec<(usize, usize, f64)> {
        let scale = len as f64 / out as f64;
        (0..out)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(len - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let rows = axis(out_h, h);
    let cols = axis(out_w, w);
    let p = &img.pixels;
    let out = Array2::from_shape_fn((out_h, out_w), |(i, j)| {
        let (r0, r1, fr) = rows[i];
        let (c0, c1, fc) = cols[j];
        let top = p[[r0, c0]] * (1.0 - fc) + p[[r0, c1]] * fc;
        let bottom = p[[r1, c0]] * (1.0 - fc) + p[[r1, c1]] * fc;
        top * (1.0 - fr) + bottom * fr
    });
    GrayImage::new(out)
}

/// Modified Shepp–Logan head phantom on an `h × w` grid.
pub fn phantom(h: usize, w: usize) -> Result<GrayImage> {
    // (intensity, semi-axis a, semi-axis b, centre x, centre y, rotation in degrees)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    if h == 0 || w == 0 {
        return Err(Error::InvalidInput("phantom size must be at least 1×1".into()));
    }
    let pixels = Array2::from_shape_fn((h, w), |(i, j)| {
        let x = (2.0 * j as f64 + 1.0) / w as f64 - 1.0;
        let y = 1.0 - (2.0 * i as f64 + 1.0) / h as f64;
        let v: f64 = ELLIPSES
            .iter()
            .filter(|&&(_, a, b, x0, y0, deg)| {
                let (s, c) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let u = dx * c + dy * s;
                let t = -dx * s + dy * c;
                (u / a).powi(2) + (t / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum();
        v.clamp(0.0, 1.0)
    });
    GrayImage::new(pixels)
}
