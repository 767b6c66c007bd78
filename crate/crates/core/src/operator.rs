//! Gram-operator abstraction shared by the Ising solvers and the CDP.
//!
//! Both problem families reduce to the same quadratic form
//! `E(v) = ½ vᵀ G v − hzᵀ v` on `v = σ ∘ R`, where `G` is the (regularized)
//! Gram matrix of the observation operator and `hz = Aᵀ y`. The solvers only
//! need products with `G` and with the zero-diagonal interaction
//! `J̃ = −(G − diag G)`, so a dense matrix and a matrix-free MRI transform chain
//! can be used interchangeably.

use crate::model::Threshold;

pub trait GramOperator: Sync {
    /// Number of spins `N`.
    fn dim(&self) -> usize;

    /// `out = G v`, diagonal included.
    fn apply_gram(&self, v: &[f64], out: &mut [f64]);

    /// `diag(G)`.
    fn gram_diag(&self) -> &[f64];

    /// `hz = Aᵀ y` without any `√τ` factor.
    fn zeeman(&self) -> &[f64];

    /// `out = G[:, cols] · x` for a column subset.
    fn apply_gram_columns(&self, cols: &[usize], x: &[f64], out: &mut [f64]) {
        let mut full = vec![0.0; self.dim()];
        for (&c, &xc) in cols.iter().zip(x) {
            full[c] = xc;
        }
        self.apply_gram(&full, out);
    }

    /// `out = J̃ w` with `J̃_{rr'} = −G_{rr'}` off the diagonal and `J̃_{rr} = 0`.
    fn apply_coupling(&self, w: &[f64], out: &mut [f64]) {
        self.apply_gram(w, out);
        for ((o, &d), &wi) in out.iter_mut().zip(self.gram_diag()).zip(w) {
            *o = d * wi - *o;
        }
    }

    /// `out = J̃ w` where `w` is nonzero only on `cols` (values `x`).
    fn apply_coupling_sparse(&self, cols: &[usize], x: &[f64], out: &mut [f64]) {
        self.apply_gram_columns(cols, x, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
        let diag = self.gram_diag();
        for (&c, &xc) in cols.iter().zip(x) {
            out[c] += diag[c] * xc;
        }
    }
}

/// Full L0 objective `½ vᵀ G v − hzᵀ v + λ ‖σ‖₀` with `v = σ ∘ R`.
///
/// For a plain observation matrix this equals
/// `½‖y − A(σ∘R)‖² − ½‖y‖² + λ‖σ‖₀`.
pub fn objective<O: GramOperator + ?Sized>(op: &O, r: &[f64], sigma: &[u8], th: Threshold) -> f64 {
    let n = op.dim();
    let v: Vec<f64> = r
        .iter()
        .zip(sigma)
        .map(|(&ri, &si)| if si != 0 { ri } else { 0.0 })
        .collect();
    let mut gv = vec![0.0; n];
    op.apply_gram(&v, &mut gv);
    let quad: f64 = v.iter().zip(&gv).map(|(a, b)| a * b).sum();
    let lin: f64 = v.iter().zip(op.zeeman()).map(|(a, b)| a * b).sum();
    let support = sigma.iter().filter(|&&s| s != 0).count() as f64;
    0.5 * quad - lin + th.lambda() * support
}

/// Indices `r` with `σ_r = 1`.
pub fn active_indices(sigma: &[u8]) -> Vec<usize> {
    sigma
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (s != 0).then_some(i))
        .collect()
}
