//! Classical digital processor: minimizes the objective over `R` at fixed `σ`.
//!
//! At fixed support the objective is the quadratic `½ R_Sᵀ G_SS R_S − b_Sᵀ R_S`
//! on the active set `S`, solved by damped Jacobi sweeps or conjugate
//! gradients. Both solvers work matrix-free through [`GramOperator`].

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{ensure_binary, HyperParams};
use crate::operator::{active_indices, GramOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdpMethod {
    Jacobi,
    ConjugateGradient,
}

/// What happens to `R_r` where `σ_r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffSupport {
    /// Keep the previous value.
    Preserve,
    /// Replace by the coordinate-wise least-squares value against the current
    /// residual, `(hz_r − Σ_{r'∈S} G_{rr'} R_{r'}) / G_rr`, i.e. the value the
    /// spin would carry if switched on.
    Refit,
}

/// Quadratic restricted to the active support.
pub struct QuadraticSubproblem<'a, O: GramOperator + ?Sized> {
    op: &'a O,
    pub active: Vec<usize>,
    pub b: Vec<f64>,
    pub diag: Vec<f64>,
}

impl<'a, O: GramOperator + ?Sized> QuadraticSubproblem<'a, O> {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// `out = G_SS x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64], full: &mut [f64]) {
        self.op.apply_gram_columns(&self.active, x, full);
        for (o, &i) in out.iter_mut().zip(&self.active) {
            *o = full[i];
        }
    }

    /// Explicit `G_SS`, for tests and diagnostics.
    pub fn dense(&self) -> Array2<f64> {
        let k = self.len();
        let mut g = Array2::zeros((k, k));
        let mut full = vec![0.0; self.op.dim()];
        let mut unit = vec![0.0; k];
        let mut col = vec![0.0; k];
        for j in 0..k {
            unit[j] = 1.0;
            self.apply(&unit, &mut col, &mut full);
            g.column_mut(j).assign(&ndarray::ArrayView1::from(&col));
            unit[j] = 0.0;
        }
        g
    }

    /// `½ xᵀ G_SS x − bᵀ x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut gx = vec![0.0; self.len()];
        self.apply(x, &mut gx, &mut vec![0.0; self.op.dim()]);
        0.5 * dot(x, &gx) - dot(&self.b, x)
    }
}

pub fn build_subproblem<'a, O: GramOperator + ?Sized>(op: &'a O, sigma: &[u8]) -> Result<QuadraticSubproblem<'a, O>> {
    check_len("support σ", op.dim(), sigma.len())?;
    ensure_binary("σ", sigma)?;
    let active = active_indices(sigma);
    let b = active.iter().map(|&i| op.zeeman()[i]).collect();
    let diag = active.iter().map(|&i| op.gram_diag()[i]).collect();
    Ok(QuadraticSubproblem { op, active, b, diag })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Damped Jacobi: `R ← (1 − Δt_c) R + Δt_c (b − Σ_{r'≠r} G_{rr'} R_{r'}) / G_rr`.
pub fn jacobi_solve<O: GramOperator + ?Sized>(
    sub: &QuadraticSubproblem<'_, O>,
    r_init: &[f64],
    dt_c: f64,
    iters: usize,
) -> Result<Vec<f64>> {
    check_len("Jacobi initial iterate", sub.len(), r_init.len())?;
    if let Some(pos) = sub.diag.iter().position(|&d| d <= 0.0) {
        return Err(Error::SingularDiagonal {
            index: sub.active[pos],
        });
    }
    let mut x = r_init.to_vec();
    let mut gx = vec![0.0; sub.len()];
    let mut full = vec![0.0; sub.op.dim()];
    for _ in 0..iters {
        sub.apply(&x, &mut gx, &mut full);
        for i in 0..x.len() {
            let off = gx[i] - sub.diag[i] * x[i];
            x[i] = (1.0 - dt_c) * x[i] + dt_c * (sub.b[i] - off) / sub.diag[i];
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// A search direction with non-positive curvature was met.
    pub breakdown: bool,
}

/// Unpreconditioned conjugate gradients from `r_init` until
/// `‖G x − b‖ ≤ tol · ‖b‖` or `max_iters`.
pub fn cg_solve<O: GramOperator + ?Sized>(
    sub: &QuadraticSubproblem<'_, O>,
    r_init: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<CgOutcome> {
    let k = sub.len();
    check_len("CG initial iterate", k, r_init.len())?;
    let mut x = r_init.to_vec();
    let mut full = vec![0.0; sub.op.dim()];
    let mut gp = vec![0.0; k];
    sub.apply(&x, &mut gp, &mut full);
    let mut res: Vec<f64> = sub.b.iter().zip(&gp).map(|(b, g)| b - g).collect();
    let mut dir = res.clone();
    let mut rr = dot(&res, &res);
    let target = tol * dot(&sub.b, &sub.b).sqrt();
    let mut iterations = 0;
    let mut breakdown = false;
    while rr.sqrt() > target && rr > 0.0 && iterations < max_iters {
        sub.apply(&dir, &mut gp, &mut full);
        let curv = dot(&dir, &gp);
        if curv <= 0.0 || !curv.is_finite() {
            breakdown = true;
            break;
        }
        let alpha = rr / curv;
        for i in 0..k {
            x[i] += alpha * dir[i];
            res[i] -= alpha * gp[i];
        }
        let rr_new = dot(&res, &res);
        let beta = rr_new / rr;
        for i in 0..k {
            dir[i] = res[i] + beta * dir[i];
        }
        rr = rr_new;
        iterations += 1;
    }
    Ok(CgOutcome {
        x,
        iterations,
        converged: rr.sqrt() <= target || rr == 0.0,
        breakdown,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdpOutcome {
    pub r: Vec<f64>,
    /// CG stopped on a non-positive curvature direction.
    pub breakdown: bool,
}

/// Updates `R` on the support of `σ`, starting from `r_prev`.
pub fn cdp_minimize<O: GramOperator + ?Sized>(
    op: &O,
    sigma: &[u8],
    r_prev: &[f64],
    method: CdpMethod,
    off_support: OffSupport,
    params: &HyperParams,
) -> Result<CdpOutcome> {
    let n = op.dim();
    check_len("previous signal R", n, r_prev.len())?;
    let sub = build_subproblem(op, sigma)?;
    let mut r = r_prev.to_vec();
    let mut breakdown = false;
    if !sub.is_empty() {
        let init: Vec<f64> = sub.active.iter().map(|&i| r_prev[i]).collect();
        let solved = match method {
            CdpMethod::Jacobi => jacobi_solve(&sub, &init, params.dt_c, params.jacobi_iters)?,
            CdpMethod::ConjugateGradient => {
                let out = cg_solve(&sub, &init, params.cg_max_iters, params.cg_tol)?;
                breakdown = out.breakdown;
                out.x
            }
        };
        for (&i, v) in sub.active.iter().zip(solved) {
            r[i] = v;
        }
    }
    if off_support == OffSupport::Refit {
        let vals: Vec<f64> = sub.active.iter().map(|&i| r[i]).collect();
        let mut g = vec![0.0; n];
        op.apply_gram_columns(&sub.active, &vals, &mut g);
        let (hz, diag) = (op.zeeman(), op.gram_diag());
        for i in 0..n {
            if sigma[i] == 0 && diag[i] > 0.0 {
                r[i] = (hz[i] - g[i]) / diag[i];
            }
        }
    }
    Ok(CdpOutcome { r, breakdown })
}
