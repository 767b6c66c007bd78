use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mri::GrayImage;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn check_dims(h: usize, w: usize) -> Result<()> {
    if h.is_power_of_two() && w.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("Haar transform needs power-of-two dimensions, got {h}×{w}")))
    }
}

/// Block sizes `(h, w)` processed at each level, coarsest last.
fn levels(h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut hh, mut ww) = (h, w);
    while hh > 1 || ww > 1 {
        out.push((hh, ww));
        hh = (hh / 2).max(1);
        ww = (ww / 2).max(1);
    }
    out
}

fn split(buf: &mut [f64], tmp: &mut [f64]) {
    let half = buf.len() / 2;
    for i in 0..half {
        let (a, b) = (buf[2 * i], buf[2 * i + 1]);
        tmp[i] = (a + b) * INV_SQRT2;
        tmp[half + i] = (a - b) * INV_SQRT2;
    }
    buf.copy_from_slice(&tmp[..buf.len()]);
}

fn merge(buf: &mut [f64], tmp: &mut [f64]) {
    let half = buf.len() / 2;
    for i in 0..half {
        let (s, d) = (buf[i], buf[half + i]);
        tmp[2 * i] = (s + d) * INV_SQRT2;
        tmp[2 * i + 1] = (s - d) * INV_SQRT2;
    }
    buf.copy_from_slice(&tmp[..buf.len()]);
}

fn rows(data: &mut [f64], stride: usize, hh: usize, ww: usize, tmp: &mut [f64], f: fn(&mut [f64], &mut [f64])) {
    for r in 0..hh {
        f(&mut data[r * stride..r * stride + ww], tmp);
    }
}

fn cols(data: &mut [f64], stride: usize, hh: usize, ww: usize, tmp: &mut [f64], f: fn(&mut [f64], &mut [f64])) {
    let mut col = vec![0.0; hh];
    for c in 0..ww {
        for r in 0..hh {
            col[r] = data[r * stride + c];
        }
        f(&mut col, tmp);
        for r in 0..hh {
            data[r * stride + c] = col[r];
        }
    }
}

/// Multi-level orthonormal 2-D Haar analysis of a row-major `h × w` buffer.
pub(crate) fn forward_in_place(data: &mut [f64], h: usize, w: usize) {
    let mut tmp = vec![0.0; h.max(w)];
    for (hh, ww) in levels(h, w) {
        if ww > 1 {
            rows(data, w, hh, ww, &mut tmp, split);
        }
        if hh > 1 {
            cols(data, w, hh, ww, &mut tmp, split);
        }
    }
}

pub(crate) fn inverse_in_place(data: &mut [f64], h: usize, w: usize) {
    let mut tmp = vec![0.0; h.max(w)];
    for (hh, ww) in levels(h, w).into_iter().rev() {
        if hh > 1 {
            cols(data, w, hh, ww, &mut tmp, merge);
        }
        if ww > 1 {
            rows(data, w, hh, ww, &mut tmp, merge);
        }
    }
}

pub fn haar2_forward(img: &Array2<f64>) -> Result<Array2<f64>> {
    let (h, w) = img.dim();
    check_dims(h, w)?;
    let mut out = img.as_standard_layout().into_owned();
    forward_in_place(out.as_slice_mut().expect("standard layout"), h, w);
    Ok(out)
}

pub fn haar2_inverse(coeffs: &Array2<f64>) -> Result<Array2<f64>> {
    let (h, w) = coeffs.dim();
    check_dims(h, w)?;
    let mut out = coeffs.as_standard_layout().into_owned();
    inverse_in_place(out.as_slice_mut().expect("standard layout"), h, w);
    Ok(out)
}

/// Keeps the `round(target·N)` largest-magnitude Haar coefficients (ties go
/// to the lower linear index) and returns the synthesized image.
pub fn sparsify_wavelet(img: &GrayImage, target: f64) -> Result<GrayImage> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidInput(format!("target sparseness must lie in (0, 1], got {target}")));
    }
    let mut coeffs = haar2_forward(&img.pixels)?;
    if (target * coeffs.len() as f64).round() as usize >= coeffs.len() {
        return Ok(img.clone());
    }
    let flat = coeffs.as_slice_mut().expect("standard layout");
    let keep = (target * flat.len() as f64).round() as usize;
    keep_largest(flat, keep);
    GrayImage::new(haar2_inverse(&coeffs)?)
}

fn keep_largest(flat: &mut [f64], keep: usize) {
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|&a, &b| flat[b].abs().total_cmp(&flat[a].abs()).then(a.cmp(&b)));
    for &i in &order[keep.min(flat.len())..] {
        flat[i] = 0.0;
    }
}
