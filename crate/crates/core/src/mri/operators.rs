use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::model::CouplingForm;
use crate::mri::fourier::Fft2;
use crate::mri::haar::{forward_in_place, inverse_in_place};
use crate::mri::{GrayImage, SamplingMask};
use crate::operator::GramOperator;

/// Largest `H·W` accepted by [`assemble_explicit`].
pub const EXPLICIT_MAX_N: usize = 1024;

/// `y = S F x`: the sampled k-space values of an image, in mask order.
pub fn observe(mask: &SamplingMask, img: &GrayImage) -> Result<Vec<Complex64>> {
    let (h, w) = mask.dims();
    if img.pixels.dim() != (h, w) {
        return Err(Error::InvalidInput(format!(
            "image is {:?} but the mask covers {h}×{w}",
            img.pixels.dim()
        )));
    }
    let mut buf: Vec<Complex64> = img.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2::new(h, w).forward(&mut buf);
    Ok(mask.indices().iter().map(|&i| buf[i]).collect())
}

/// Matrix-free wavelet-domain quadratic form for undersampled Fourier data,
/// `A = S F Ψᵀ`:
///
/// `G = Re(A†A) + γ Ψ(Δᵥᵀ Δᵥ + Δₕᵀ Δₕ)Ψᵀ`, `hz = Re(A† y)`.
#[derive(Debug, Clone)]
pub struct MriOperators {
    h: usize,
    w: usize,
    mask: SamplingMask,
    gamma: f64,
    fft: Fft2,
    hz: Vec<f64>,
    diag: Vec<f64>,
}

pub fn assemble_operators(mask: &SamplingMask, gamma: f64, samples: &[Complex64]) -> Result<MriOperators> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be finite and non-negative, got {gamma}")));
    }
    let (h, w) = mask.dims();
    if !(h.is_power_of_two() && w.is_power_of_two()) {
        return Err(Error::InvalidInput(format!("wavelet basis needs power-of-two dimensions, got {h}×{w}")));
    }
    check_len("k-space samples", mask.len(), samples.len())?;
    let n = h * w;
    let fft = Fft2::new(h, w);

    let mut k = vec![Complex64::default(); n];
    for (&i, &s) in mask.indices().iter().zip(samples) {
        k[i] = s;
    }
    fft.inverse(&mut k);
    let mut hz: Vec<f64> = k.iter().map(|c| c.re).collect();
    forward_in_place(&mut hz, h, w);

    let mut op = MriOperators {
        h,
        w,
        mask: mask.clone(),
        gamma,
        fft,
        hz,
        diag: Vec::new(),
    };
    op.diag = op.compute_diag();
    Ok(op)
}

impl MriOperators {
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    /// Image `Ψᵀ θ` for wavelet coefficients `θ` (not clamped).
    pub fn synthesize(&self, theta: &[f64]) -> Result<GrayImage> {
        check_len("wavelet coefficients", self.h * self.w, theta.len())?;
        let mut x = theta.to_vec();
        inverse_in_place(&mut x, self.h, self.w);
        GrayImage::new(Array2::from_shape_vec((self.h, self.w), x).expect("shape"))
    }

    /// Wavelet coefficients `Ψ x` of an image.
    pub fn analyze(&self, img: &GrayImage) -> Result<Vec<f64>> {
        if img.pixels.dim() != (self.h, self.w) {
            return Err(Error::InvalidInput(format!("image is {:?}, operator is {}×{}", img.pixels.dim(), self.h, self.w)));
        }
        let mut x = img.as_slice().to_vec();
        forward_in_place(&mut x, self.h, self.w);
        Ok(x)
    }

    /// Same operator with `γ = 0` and the same data.
    pub fn without_smoothing(&self) -> MriOperators {
        let mut op = self.clone();
        op.gamma = 0.0;
        op.diag = op.compute_diag();
        op
    }

    /// Column-by-column dense `G`, for tests and small problems.
    pub fn dense_gram(&self) -> Array2<f64> {
        let n = self.h * self.w;
        let mut g = Array2::zeros((n, n));
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_gram(&e, &mut col);
            g.column_mut(j).assign(&ndarray::ArrayView1::from(&col));
            e[j] = 0.0;
        }
        g
    }

    fn compute_diag(&self) -> Vec<f64> {
        let n = self.h * self.w;
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        (0..n)
            .map(|i| {
                e[i] = 1.0;
                self.apply_gram(&e, &mut col);
                e[i] = 0.0;
                col[i]
            })
            .collect()
    }

    /// `out += γ (Δᵥᵀ Δᵥ + Δₕᵀ Δₕ) x` on a pixel-domain buffer.
    fn add_smoothing(&self, x: &[f64], out: &mut [f64]) {
        let (h, w) = (self.h, self.w);
        let mut line = Vec::with_capacity(h.max(w));
        let mut d1 = vec![0.0; h.max(w)];
        let mut d2 = vec![0.0; h.max(w)];
        for c in 0..w {
            line.clear();
            line.extend((0..h).map(|r| x[r * w + c]));
            second_difference(&line, &mut d1[..h]);
            second_difference_t(&d1[..h], &mut d2[..h]);
            for r in 0..h {
                out[r * w + c] += self.gamma * d2[r];
            }
        }
        for r in 0..h {
            second_difference(&x[r * w..(r + 1) * w], &mut d1[..w]);
            second_difference_t(&d1[..w], &mut d2[..w]);
            for c in 0..w {
                out[r * w + c] += self.gamma * d2[c];
            }
        }
    }
}

/// `(Δx)_i = x_{i−1} − 2x_i + x_{i+1}` with mirrored ends `x_{−1} = x_0`, `x_n = x_{n−1}`.
fn second_difference(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let prev = x[i.saturating_sub(1)];
        let next = x[(i + 1).min(n - 1)];
        out[i] = prev - 2.0 * x[i] + next;
    }
}

fn second_difference_t(d: &[f64], out: &mut [f64]) {
    let n = d.len();
    out.fill(0.0);
    for i in 0..n {
        let prev = i.saturating_sub(1);
        let next = (i + 1).min(n - 1);
        out[prev] += d[i];
        out[i] -= 2.0 * d[i];
        out[next] += d[i];
    }
}

impl GramOperator for MriOperators {
    fn dim(&self) -> usize {
        self.h * self.w
    }

    fn apply_gram(&self, v: &[f64], out: &mut [f64]) {
        let (h, w) = (self.h, self.w);
        let mut x = v.to_vec();
        inverse_in_place(&mut x, h, w);
        let mut k: Vec<Complex64> = x.iter().map(|&p| Complex64::new(p, 0.0)).collect();
        self.fft.forward(&mut k);
        self.mask.project(&mut k);
        self.fft.inverse(&mut k);
        for (o, c) in out.iter_mut().zip(&k) {
            *o = c.re;
        }
        if self.gamma > 0.0 {
            self.add_smoothing(&x, out);
        }
        forward_in_place(out, h, w);
    }

    fn gram_diag(&self) -> &[f64] {
        &self.diag
    }

    fn zeeman(&self) -> &[f64] {
        &self.hz
    }
}

/// The same quadratic form built from explicit DFT, Haar and second-difference
/// matrices; only for `H·W ≤ EXPLICIT_MAX_N`.
pub fn assemble_explicit(mask: &SamplingMask, gamma: f64, samples: &[Complex64]) -> Result<CouplingForm> {
    let (h, w) = mask.dims();
    let n = h * w;
    if n > EXPLICIT_MAX_N {
        return Err(Error::TooLarge { n, limit: EXPLICIT_MAX_N });
    }
    if !(h.is_power_of_two() && w.is_power_of_two()) {
        return Err(Error::InvalidInput(format!("wavelet basis needs power-of-two dimensions, got {h}×{w}")));
    }
    check_len("k-space samples", mask.len(), samples.len())?;

    // Ψᵀ: column j is the synthesis of the j-th unit coefficient
    let mut psi_t = Array2::zeros((n, n));
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        inverse_in_place(&mut e, h, w);
        psi_t.column_mut(j).assign(&ndarray::ArrayView1::from(&e));
    }

    // S F as real and imaginary parts, rows in mask order
    let m = mask.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut sf_re = Array2::zeros((m, n));
    let mut sf_im = Array2::zeros((m, n));
    for (row, &idx) in mask.indices().iter().enumerate() {
        let (u, v) = (idx / w, idx % w);
        for p in 0..h {
            for q in 0..w {
                let phase = -2.0 * std::f64::consts::PI * ((u * p) as f64 / h as f64 + (v * q) as f64 / w as f64);
                sf_re[[row, p * w + q]] = scale * phase.cos();
                sf_im[[row, p * w + q]] = scale * phase.sin();
            }
        }
    }
    let a_re = sf_re.dot(&psi_t);
    let a_im = sf_im.dot(&psi_t);
    let mut gram = a_re.t().dot(&a_re) + a_im.t().dot(&a_im);

    if gamma > 0.0 {
        let dv = kron_rows(&second_difference_matrix(h), w);
        let dh = kron_cols(h, &second_difference_matrix(w));
        for d in [dv, dh] {
            let b = d.dot(&psi_t);
            gram = gram + gamma * b.t().dot(&b);
        }
    }

    let y_re = Array1::from_iter(samples.iter().map(|c| c.re));
    let y_im = Array1::from_iter(samples.iter().map(|c| c.im));
    let hz = a_re.t().dot(&y_re) + a_im.t().dot(&y_im);
    CouplingForm::from_gram(gram, hz)
}

fn second_difference_matrix(n: usize) -> Array2<f64> {
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        d[[i, i.saturating_sub(1)]] += 1.0;
        d[[i, i]] -= 2.0;
        d[[i, (i + 1).min(n - 1)]] += 1.0;
    }
    d
}

/// `D ⊗ I_w`: acts along the row index of a row-major `h × w` image.
fn kron_rows(d: &Array2<f64>, w: usize) -> Array2<f64> {
    let h = d.nrows();
    Array2::from_shape_fn((h * w, h * w), |(i, j)| if i % w == j % w { d[[i / w, j / w]] } else { 0.0 })
}

/// `I_h ⊗ D`: acts along the column index.
fn kron_cols(h: usize, d: &Array2<f64>) -> Array2<f64> {
    let w = d.nrows();
    Array2::from_shape_fn((h * w, h * w), |(i, j)| if i / w == j / w { d[[i % w, j % w]] } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::{make_mask, phantom};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn setup(h: usize, w: usize, m: usize, gamma: f64) -> (MriOperators, CouplingForm) {
        let mask = make_mask(h, w, m, 11).unwrap();
        let img = phantom(h, w).unwrap();
        let y = observe(&mask, &img).unwrap();
        (assemble_operators(&mask, gamma, &y).unwrap(), assemble_explicit(&mask, gamma, &y).unwrap())
    }

    #[test]
    fn full_sampling_without_smoothing_is_identity() {
        let (op, explicit) = setup(8, 8, 64, 0.0);
        let g = op.dense_gram();
        for ((i, j), &v) in g.indexed_iter() {
            assert!((v - f64::from(u8::from(i == j))).abs() < 1e-10);
        }
        for ((i, j), &v) in explicit.gram().indexed_iter() {
            assert!((v - f64::from(u8::from(i == j))).abs() < 1e-10);
        }
        // hz is then just the wavelet transform of the image
        let img = phantom(8, 8).unwrap();
        let theta = op.analyze(&img).unwrap();
        for (a, b) in op.zeeman().iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_free_matches_explicit() {
        for (h, w, m, gamma) in [(8, 8, 26, 1e-4), (16, 8, 40, 0.3), (4, 16, 64, 0.0), (16, 16, 100, 1e-2)] {
            let (op, explicit) = setup(h, w, m, gamma);
            let n = h * w;
            for seed in 0..3 {
                let v = random_vec(n, seed);
                let mut a = vec![0.0; n];
                let mut b = vec![0.0; n];
                op.apply_gram(&v, &mut a);
                explicit.apply_gram(&v, &mut b);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-10, "{h}×{w}: {x} vs {y}");
                }
            }
            for (x, y) in op.zeeman().iter().zip(explicit.zeeman()) {
                assert!((x - y).abs() < 1e-10);
            }
            for (x, y) in op.gram_diag().iter().zip(explicit.gram_diag()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gram_is_symmetric_and_smoothing_is_psd() {
        let (op, _) = setup(16, 16, 80, 0.5);
        let g = op.dense_gram();
        let asym = g.iter().zip(g.t().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(asym < 1e-12, "{asym}");

        let (data_only, _) = setup(16, 16, 80, 0.0);
        for seed in 0..10 {
            let v = random_vec(256, seed);
            let mut a = vec![0.0; 256];
            let mut b = vec![0.0; 256];
            op.apply_gram(&v, &mut a);
            data_only.apply_gram(&v, &mut b);
            let q: f64 = v.iter().zip(a.iter().zip(&b)).map(|(x, (p, r))| x * (p - r)).sum();
            assert!(q >= -1e-12);
        }
    }

    #[test]
    fn second_difference_edges_and_adjoint() {
        let x = [1.0, 4.0, 9.0, 16.0];
        let mut d = [0.0; 4];
        second_difference(&x, &mut d);
        assert_eq!(d, [3.0, 2.0, 2.0, -7.0]);
        let mut c = [0.0; 3];
        second_difference(&[5.0, 5.0, 5.0], &mut c);
        assert_eq!(c, [0.0; 3]);

        let u = random_vec(7, 1);
        let v = random_vec(7, 2);
        let mut du = vec![0.0; 7];
        let mut dtv = vec![0.0; 7];
        second_difference(&u, &mut du);
        second_difference_t(&v, &mut dtv);
        let lhs: f64 = du.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&dtv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sampled_image_is_a_minimizer_under_full_sampling() {
        let (op, _) = setup(16, 16, 256, 0.0);
        let img = phantom(16, 16).unwrap();
        let theta = op.analyze(&img).unwrap();
        let back = op.synthesize(&theta).unwrap();
        assert!(back.rmse(&img).unwrap() < 1e-12);
        let mut g = vec![0.0; 256];
        op.apply_gram(&theta, &mut g);
        for (a, b) in g.iter().zip(op.zeeman()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mask = make_mask(8, 8, 10, 0).unwrap();
        assert!(assemble_operators(&mask, -1.0, &[Complex64::default(); 10]).is_err());
        assert!(assemble_operators(&mask, 0.0, &[Complex64::default(); 9]).is_err());
        let big = make_mask(64, 64, 10, 0).unwrap();
        assert!(matches!(
            assemble_explicit(&big, 0.0, &[Complex64::default(); 10]),
            Err(Error::TooLarge { .. })
        ));
        let odd = SamplingMask::new(vec![0], 6, 8).unwrap();
        assert!(assemble_operators(&odd, 0.0, &[Complex64::default()]).is_err());
    }
}
