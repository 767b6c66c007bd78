use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Unitary 2-D DFT (`1/√(HW)` in both directions) on row-major buffers.
#[derive(Clone)]
pub struct Fft2 {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}×{})", self.h, self.w)
    }
}

impl Fft2 {
    pub fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &*self.row_fwd, &*self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &*self.row_inv, &*self.col_inv);
    }

    fn run(&self, buf: &mut [Complex64], row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
        let (h, w) = (self.h, self.w);
        assert_eq!(buf.len(), h * w, "buffer does not match the transform size");
        row.process(buf);
        let mut column = vec![Complex64::default(); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = buf[r * w + c];
            }
            col.process(&mut column);
            for r in 0..h {
                buf[r * w + c] = column[r];
            }
        }
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

pub fn dft2(img: &Array2<f64>) -> Array2<Complex64> {
    let (h, w) = img.dim();
    let mut buf: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2::new(h, w).forward(&mut buf);
    Array2::from_shape_vec((h, w), buf).expect("shape")
}

pub fn idft2(k: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = k.dim();
    let mut buf: Vec<Complex64> = k.iter().copied().collect();
    Fft2::new(h, w).inverse(&mut buf);
    Array2::from_shape_vec((h, w), buf).expect("shape")
}
