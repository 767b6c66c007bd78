//! Problem instances, the L0RBCS Hamiltonian, coupling construction and metrics.

mod bundle;
mod oracle;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operator::GramOperator;

pub use bundle::{read_bundle, write_bundle, InstanceMeta};
pub use oracle::{brute_force_l0rbcs, BruteForceResult, BRUTE_FORCE_MAX_N};

/// Observation model `y = A(ξ∘x) + w` plus the metadata it was drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    /// Observation matrix, `M × N`.
    pub matrix: Array2<f64>,
    pub y: Array1<f64>,
    pub x_true: Option<Array1<f64>>,
    pub xi_true: Option<Vec<u8>>,
    /// Sparseness ratio `a`.
    pub sparseness: f64,
    /// Compression ratio `α = M/N`.
    pub alpha: f64,
    /// Observation-noise standard deviation `ν`.
    pub nu: f64,
    pub seed: u64,
}

impl ProblemInstance {
    /// Instance without ground truth.
    pub fn new(matrix: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (m, n) = matrix.dim();
        let inst = ProblemInstance {
            matrix,
            y,
            x_true: None,
            xi_true: None,
            sparseness: 0.0,
            alpha: m as f64 / n.max(1) as f64,
            nu: 0.0,
            seed: 0,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.matrix.dim();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput("observation matrix is empty".into()));
        }
        check_len("observation y", m, self.y.len())?;
        if let Some(x) = &self.x_true {
            check_len("ground-truth x", n, x.len())?;
        }
        if let Some(xi) = &self.xi_true {
            check_len("ground-truth ξ", n, xi.len())?;
            ensure_binary("ground-truth ξ", xi)?;
            let expected = (self.sparseness * n as f64).round() as usize;
            let ones = xi.iter().filter(|&&v| v == 1).count();
            if ones != expected {
                return Err(Error::InvalidInput(format!(
                    "ξ has {ones} nonzeros but round(a·N) = {expected}"
                )));
            }
        }
        if (self.alpha - m as f64 / n as f64).abs() > 1.0 / n as f64 {
            return Err(Error::InvalidInput(format!(
                "alpha {} inconsistent with M/N = {m}/{n}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// `x ∘ ξ`, if the ground truth is known.
    pub fn true_signal(&self) -> Option<Array1<f64>> {
        let x = self.x_true.as_ref()?;
        let xi = self.xi_true.as_ref()?;
        Some(Array1::from_iter(
            x.iter().zip(xi).map(|(&v, &s)| if s != 0 { v } else { 0.0 }),
        ))
    }
}

/// Zero-diagonal interaction `J̃_{rr'} = −Σ_k A_r^k A_{r'}^k` and Zeeman
/// vector `hz_r = Σ_k A_r^k y^k`, plus the Gram diagonal the CDP needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingForm {
    pub j: Array2<f64>,
    pub hz: Array1<f64>,
    pub gram_diag: Array1<f64>,
}

impl CouplingForm {
    /// Builds the form from a full symmetric Gram matrix and Zeeman vector.
    pub fn from_gram(gram: Array2<f64>, hz: Array1<f64>) -> Result<Self> {
        let n = gram.nrows();
        check_len("Gram matrix columns", n, gram.ncols())?;
        check_len("Zeeman vector", n, hz.len())?;
        let gram_diag = gram.diag().to_owned();
        let mut j = gram;
        j.mapv_inplace(|v| -v);
        j.diag_mut().fill(0.0);
        Ok(CouplingForm { j, hz, gram_diag })
    }

    /// Full Gram matrix `G = −J̃ + diag`.
    pub fn gram(&self) -> Array2<f64> {
        let mut g = self.j.mapv(|v| -v);
        g.diag_mut().assign(&self.gram_diag);
        g
    }
}

impl GramOperator for CouplingForm {
    fn dim(&self) -> usize {
        self.hz.len()
    }

    fn apply_gram(&self, v: &[f64], out: &mut [f64]) {
        // out = J v, then G v = diag∘v − J v
        ndarray::linalg::general_mat_vec_mul(
            1.0,
            &self.j,
            &ArrayView1::from(v),
            0.0,
            &mut ArrayViewMut1::from(&mut *out),
        );
        for ((o, &d), &vi) in out.iter_mut().zip(&self.gram_diag).zip(v) {
            *o = d * vi - *o;
        }
    }

    fn gram_diag(&self) -> &[f64] {
        self.gram_diag.as_slice().expect("contiguous")
    }

    fn zeeman(&self) -> &[f64] {
        self.hz.as_slice().expect("contiguous")
    }

    fn apply_coupling(&self, w: &[f64], out: &mut [f64]) {
        ndarray::linalg::general_mat_vec_mul(
            1.0,
            &self.j,
            &ArrayView1::from(w),
            0.0,
            &mut ArrayViewMut1::from(out),
        );
    }

    fn apply_gram_columns(&self, cols: &[usize], x: &[f64], out: &mut [f64]) {
        self.apply_coupling_sparse(cols, x, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
        for (&c, &xc) in cols.iter().zip(x) {
            out[c] += self.gram_diag[c] * xc;
        }
    }

    fn apply_coupling_sparse(&self, cols: &[usize], x: &[f64], out: &mut [f64]) {
        // J̃ is symmetric, so column c is row c
        out.fill(0.0);
        for (&c, &xc) in cols.iter().zip(x) {
            if xc == 0.0 {
                continue;
            }
            let row = self.j.row(c);
            let row = row.as_slice().expect("row-major J");
            for (o, &jv) in out.iter_mut().zip(row) {
                *o += xc * jv;
            }
        }
    }
}

/// Hard threshold `η` and the equivalent L0 weight `λ = η²/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub eta: f64,
}

impl Threshold {
    pub fn from_eta(eta: f64) -> Self {
        Threshold { eta }
    }

    pub fn from_lambda(lambda: f64) -> Self {
        Threshold {
            eta: (2.0 * lambda).sqrt(),
        }
    }

    pub fn lambda(self) -> f64 {
        0.5 * self.eta * self.eta
    }
}

/// Every scalar knob of the solvers, schedules and CDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Nonlinear saturation `g²` (Positive-P only).
    pub g2: f64,
    /// Normalized out-coupling rate `j`.
    pub j: f64,
    /// Feedback strength `K`.
    pub k: f64,
    /// Error-feedback rate `β`.
    pub beta: f64,
    /// Target amplitude `τ`.
    pub tau: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub p_thr: f64,
    /// Pump swing `d`.
    pub d: f64,
    pub eta_init: f64,
    pub eta_end: f64,
    pub velo: usize,
    /// Jacobi time increment `Δt_c`.
    pub dt_c: f64,
    pub jacobi_iters: usize,
    pub cg_max_iters: usize,
    pub cg_tol: f64,
    /// L2 smoothness weight (MRI).
    pub gamma: f64,
    /// Use `(−1 + p − j − c²)c` as the mean-field loss term.
    pub modified_loss: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            g2: 1e-7,
            j: 1.0,
            k: 1.0,
            beta: 0.2,
            tau: 1.0,
            dt: 0.02,
            n_steps: 1000,
            p_thr: 1.0,
            d: 0.4,
            eta_init: 0.8,
            eta_end: 0.18,
            velo: 51,
            dt_c: 0.1,
            jacobi_iters: 100,
            cg_max_iters: 10_000,
            cg_tol: 1e-10,
            gamma: 1e-4,
            modified_loss: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let finite = [
            self.g2, self.j, self.k, self.beta, self.tau, self.dt, self.p_thr, self.d,
            self.eta_init, self.eta_end, self.dt_c, self.cg_tol, self.gamma,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all scalar parameters must be finite");
        }
        if self.dt <= 0.0 {
            return bad("dt must be positive");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1");
        }
        if self.tau <= 0.0 {
            return bad("tau must be positive");
        }
        if self.g2 < 0.0 {
            return bad("g2 must be non-negative");
        }
        if !(self.eta_init >= self.eta_end && self.eta_end >= 0.0) {
            return bad("thresholds must satisfy eta_init >= eta_end >= 0");
        }
        if self.velo == 0 {
            return bad("velo must be at least 1");
        }
        if self.gamma < 0.0 {
            return bad("gamma must be non-negative");
        }
        Ok(())
    }

    /// Normalized time covered by one CIM call.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// A candidate solution: binary support and continuous signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSignalPair {
    pub sigma: Vec<u8>,
    pub r: Array1<f64>,
}

impl SupportSignalPair {
    pub fn new(sigma: Vec<u8>, r: Array1<f64>) -> Result<Self> {
        check_len("support/signal", sigma.len(), r.len())?;
        ensure_binary("σ", &sigma)?;
        Ok(SupportSignalPair { sigma, r })
    }

    /// `σ ∘ R`.
    pub fn signal(&self) -> Array1<f64> {
        masked(self.r.as_slice().expect("contiguous"), &self.sigma)
    }
}

pub(crate) fn ensure_binary(what: &str, v: &[u8]) -> Result<()> {
    match v.iter().position(|&s| s > 1) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{what} must be binary; entry {i} is {}",
            v[i]
        ))),
        None => Ok(()),
    }
}

pub(crate) fn masked(r: &[f64], sigma: &[u8]) -> Array1<f64> {
    Array1::from_iter(
        r.iter()
            .zip(sigma)
            .map(|(&ri, &s)| if s != 0 { ri } else { 0.0 }),
    )
}

/// The L0RBCS Hamiltonian exactly as written element-wise:
/// `Σ_{r<r'} Σ_k A_r^k A_{r'}^k R_r R_{r'} σ_r σ_{r'} − Σ_r Σ_k y^k A_r^k R_r σ_r + λ Σ_r σ_r`.
///
/// This is the function the injection fields descend. It omits the
/// self-energy `½ Σ_r ‖A_r‖² R_r² σ_r`; see [`objective`] for the full
/// least-squares objective.
pub fn hamiltonian(inst: &ProblemInstance, r: &[f64], sigma: &[u8], th: Threshold) -> Result<f64> {
    let (a_v, v) = observe(inst, r, sigma)?;
    let self_energy: f64 = inst
        .matrix
        .columns()
        .into_iter()
        .zip(&v)
        .map(|(col, &vi)| vi * vi * col.dot(&col))
        .sum();
    let pair = 0.5 * (a_v.dot(&a_v) - self_energy);
    let lin = inst.y.dot(&a_v);
    Ok(pair - lin + th.lambda() * support_size(sigma) as f64)
}

/// `½‖y − A(σ∘R)‖² − ½‖y‖² + λ‖σ‖₀`, the regularized least-squares objective
/// shifted so that the empty support scores zero.
pub fn objective(inst: &ProblemInstance, r: &[f64], sigma: &[u8], th: Threshold) -> Result<f64> {
    let (a_v, _) = observe(inst, r, sigma)?;
    let resid = &inst.y - &a_v;
    Ok(0.5 * (resid.dot(&resid) - inst.y.dot(&inst.y)) + th.lambda() * support_size(sigma) as f64)
}

fn observe(inst: &ProblemInstance, r: &[f64], sigma: &[u8]) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = inst.n();
    check_len("signal R", n, r.len())?;
    check_len("support σ", n, sigma.len())?;
    ensure_binary("σ", sigma)?;
    let v = masked(r, sigma);
    Ok((inst.matrix.dot(&v), v))
}

fn support_size(sigma: &[u8]) -> usize {
    sigma.iter().filter(|&&s| s != 0).count()
}

/// `J̃ = −AᵀA` with the diagonal zeroed, `hz = Aᵀy`.
pub fn coupling_from_observation(a: &Array2<f64>, y: &Array1<f64>) -> Result<CouplingForm> {
    if a.is_empty() {
        return Err(Error::InvalidInput("observation matrix is empty".into()));
    }
    check_len("observation y", a.nrows(), y.len())?;
    let gram = a.t().dot(a);
    let hz = a.t().dot(y);
    CouplingForm::from_gram(gram, hz)
}

/// `sqrt((1/N) Σ_r (R_r σ_r − x_r ξ_r)²)`.
pub fn rmse(r: &[f64], sigma: &[u8], x_true: &[f64], xi_true: &[u8]) -> Result<f64> {
    let n = r.len();
    check_len("support σ", n, sigma.len())?;
    check_len("ground-truth x", n, x_true.len())?;
    check_len("ground-truth ξ", n, xi_true.len())?;
    if n == 0 {
        return Err(Error::InvalidInput("empty vectors".into()));
    }
    let sum: f64 = (0..n)
        .map(|i| {
            let est = if sigma[i] != 0 { r[i] } else { 0.0 };
            let truth = if xi_true[i] != 0 { x_true[i] } else { 0.0 };
            (est - truth).powi(2)
        })
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// RMSE against an instance's ground truth; fails if the truth is absent.
pub fn rmse_against(inst: &ProblemInstance, r: &[f64], sigma: &[u8]) -> Result<f64> {
    match (&inst.x_true, &inst.xi_true) {
        (Some(x), Some(xi)) => rmse(r, sigma, x.as_slice().expect("contiguous"), xi),
        _ => Err(Error::InvalidInput("instance has no ground truth".into())),
    }
}

/// `(1/N) Σ_r |σ_r − ξ_r|`.
pub fn hamming_loss(sigma: &[u8], xi_true: &[u8]) -> Result<f64> {
    check_len("support σ vs ξ", xi_true.len(), sigma.len())?;
    ensure_binary("σ", sigma)?;
    ensure_binary("ξ", xi_true)?;
    if sigma.is_empty() {
        return Err(Error::InvalidInput("empty vectors".into()));
    }
    let mismatches = sigma.iter().zip(xi_true).filter(|(a, b)| a != b).count();
    Ok(mismatches as f64 / sigma.len() as f64)
}
