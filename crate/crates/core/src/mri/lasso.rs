use crate::error::{check_len, Error, Result};
use crate::operator::GramOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub max_iter: usize,
    /// Stop once the relative objective change drops below this.
    pub tol: f64,
    /// Upper bound on `‖G‖₂`; estimated by power iteration when absent.
    pub lipschitz: Option<f64>,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            max_iter: 5000,
            tol: 1e-8,
            lipschitz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `½xᵀGx − hzᵀx + λ₁‖x‖₁`, i.e. the LASSO objective minus `½‖y‖²`.
    pub objective: f64,
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn lasso_objective<O: GramOperator + ?Sized>(op: &O, x: &[f64], lambda: f64, gx: &mut [f64]) -> f64 {
    op.apply_gram(x, gx);
    let mut quad = 0.0;
    let mut l1 = 0.0;
    for ((&xi, &gi), &hi) in x.iter().zip(gx.iter()).zip(op.zeeman()) {
        quad += 0.5 * xi * gi - hi * xi;
        l1 += xi.abs();
    }
    quad + lambda * l1
}

/// Largest eigenvalue of `G` by power iteration, padded by 5%.
pub(crate) fn estimate_lipschitz<O: GramOperator + ?Sized>(op: &O) -> f64 {
    let n = op.dim();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut gv = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..100 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        op.apply_gram(&v, &mut gv);
        est = v.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>();
        std::mem::swap(&mut v, &mut gv);
    }
    1.05 * est.max(f64::MIN_POSITIVE)
}

/// Accelerated proximal gradient (FISTA) for
/// `min ½‖y − A x‖² + λ₁‖x‖₁`, expressed through `G = AᵀA` and `hz = Aᵀy`.
pub fn lasso_init<O: GramOperator + ?Sized>(
    op: &O,
    lambda: f64,
    x0: Option<&[f64]>,
    options: LassoOptions,
) -> Result<LassoOutcome> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda_l1 must be finite and non-negative, got {lambda}")));
    }
    let n = op.dim();
    let mut x = match x0 {
        Some(x0) => {
            check_len("LASSO start", n, x0.len())?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let lip = match options.lipschitz {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::InvalidInput(format!("Lipschitz bound must be positive, got {l}"))),
        None => estimate_lipschitz(op),
    };
    let step = 1.0 / lip;
    let hz = op.zeeman();

    let mut z = x.clone();
    let mut x_prev = x.clone();
    let mut grad = vec![0.0; n];
    let mut t = 1.0f64;
    let mut f_prev = lasso_objective(op, &x, lambda, &mut grad);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        op.apply_gram(&z, &mut grad);
        x_prev.copy_from_slice(&x);
        for i in 0..n {
            x[i] = soft(z[i] - step * (grad[i] - hz[i]), step * lambda);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        for i in 0..n {
            z[i] = x[i] + mom * (x[i] - x_prev[i]);
        }
        t = t_next;

        let f = lasso_objective(op, &x, lambda, &mut grad);
        let scale = f.abs().max(f_prev.abs()).max(f64::MIN_POSITIVE);
        let change = (f - f_prev).abs() / scale;
        f_prev = f;
        if change < options.tol {
            converged = true;
            break;
        }
    }
    Ok(LassoOutcome {
        x,
        iterations,
        converged,
        objective: f_prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coupling_from_observation;
    use nalgebra::{DMatrix, DVector};
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn to_nd(a: &DMatrix<f64>) -> Array2<f64> {
        Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        let q = random_matrix(12, 12, 1).qr().q();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = coupling_from_observation(&to_nd(&q), &Array1::from(y.clone())).unwrap();
        let aty = q.transpose() * DVector::from_vec(y);
        let lambda = 0.3;
        let out = lasso_init(&c, lambda, None, LassoOptions::default()).unwrap();
        assert!(out.converged);
        for (x, b) in out.x.iter().zip(aty.iter()) {
            assert!((x - soft(*b, lambda)).abs() < 1e-4);
        }
        let tight = LassoOptions {
            tol: 1e-15,
            ..Default::default()
        };
        let out = lasso_init(&c, lambda, None, tight).unwrap();
        for (x, b) in out.x.iter().zip(aty.iter()) {
            assert!((x - soft(*b, lambda)).abs() < 1e-7, "{x} vs {}", soft(*b, lambda));
        }
    }

    #[test]
    fn zero_penalty_gives_least_squares() {
        let a = random_matrix(30, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let ls = a.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        let c = coupling_from_observation(&to_nd(&a), &Array1::from(y.as_slice().to_vec())).unwrap();
        let opts = LassoOptions {
            tol: 1e-15,
            max_iter: 20000,
            ..Default::default()
        };
        let out = lasso_init(&c, 0.0, None, opts).unwrap();
        for (x, b) in out.x.iter().zip(ls.iter()) {
            assert!((x - b).abs() < 1e-5, "{x} vs {b}");
        }
    }

    #[test]
    fn large_penalty_gives_zero() {
        let a = random_matrix(10, 20, 5);
        let y = Array1::from_shape_fn(10, |i| (i as f64).sin());
        let c = coupling_from_observation(&to_nd(&a), &y).unwrap();
        let bound = c.zeeman().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let out = lasso_init(&c, bound * 1.01, None, LassoOptions::default()).unwrap();
        assert!(out.x.iter().all(|&v| v == 0.0));
        assert!(lasso_init(&c, -1.0, None, LassoOptions::default()).is_err());
    }

    #[test]
    fn power_iteration_bounds_spectrum() {
        let a = random_matrix(15, 10, 6);
        let g = a.transpose() * &a;
        let lmax = g.symmetric_eigenvalues().max();
        let c = coupling_from_observation(&to_nd(&a), &Array1::zeros(15)).unwrap();
        let est = estimate_lipschitz(&c);
        assert!(est >= lmax && est <= 1.06 * lmax, "{est} vs {lmax}");
    }
}
