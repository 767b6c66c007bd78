use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Randomly selected k-space positions (row-major linear indices, sorted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    indices: Vec<usize>,
    h: usize,
    w: usize,
}

impl SamplingMask {
    pub fn new(mut indices: Vec<usize>, h: usize, w: usize) -> Result<Self> {
        let n = h * w;
        indices.sort_unstable();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!("mask index {bad} outside a {h}×{w} grid")));
        }
        if indices.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidInput("mask indices must be unique".into()));
        }
        Ok(SamplingMask { indices, h, w })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn compression(&self) -> f64 {
        self.indices.len() as f64 / (self.h * self.w) as f64
    }

    /// Indicator over the full grid.
    pub fn selection(&self) -> Vec<bool> {
        let mut sel = vec![false; self.h * self.w];
        for &i in &self.indices {
            sel[i] = true;
        }
        sel
    }

    /// `SᵀS`: zeroes every unsampled entry in place.
    pub fn project<T: Default + Copy>(&self, buf: &mut [T]) {
        let mut next = self.indices.iter().peekable();
        for (i, v) in buf.iter_mut().enumerate() {
            if next.peek() == Some(&&i) {
                next.next();
            } else {
                *v = T::default();
            }
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(f, "# {}x{}", self.h, self.w).map_err(io)?;
        writeln!(f, "index").map_err(io)?;
        for i in &self.indices {
            writeln!(f, "{i}").map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// `m` distinct positions drawn uniformly from a ChaCha20 stream.
pub fn make_mask(h: usize, w: usize, m: usize, seed: u64) -> Result<SamplingMask> {
    let n = h * w;
    if m > n {
        return Err(Error::InvalidInput(format!("cannot sample {m} of {n} k-space points")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    SamplingMask::new(rand::seq::index::sample(&mut rng, n, m).into_vec(), h, w)
}
