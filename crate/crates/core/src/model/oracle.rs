//! Exhaustive ground-state search used as a test oracle.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;

use super::{ProblemInstance, Threshold};
use crate::error::{Error, Result};

pub const BRUTE_FORCE_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub r: Array1<f64>,
    pub sigma: Vec<u8>,
    /// Minimum of `½‖y − A(σ∘R)‖² − ½‖y‖² + λ‖σ‖₀`.
    pub energy: f64,
}

/// Enumerates every support, fits `R` by least squares on the active columns
/// and keeps the lowest objective. Exact ties go to the smaller support, then
/// to the lexicographically smaller `σ`.
pub fn brute_force_l0rbcs(inst: &ProblemInstance, th: Threshold) -> Result<BruteForceResult> {
    let n = inst.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            limit: BRUTE_FORCE_MAX_N,
        });
    }
    let m = inst.m();
    let a = DMatrix::from_fn(m, n, |k, r| inst.matrix[[k, r]]);
    let gram = a.transpose() * &a;
    let b = a.transpose() * DVector::from_iterator(m, inst.y.iter().copied());
    let lambda = th.lambda();
    let tie_tol = 1e-12 * (1.0 + inst.y.dot(&inst.y));

    let mut best_sigma = vec![0u8; n];
    let mut best_vals: Vec<f64> = Vec::new();
    let mut best_energy = 0.0;

    for mask in 1u32..(1u32 << n) {
        let active: Vec<usize> = (0..n).filter(|&r| mask & (1 << r) != 0).collect();
        let k = active.len();
        let g_s = DMatrix::from_fn(k, k, |i, l| gram[(active[i], active[l])]);
        let b_s = DVector::from_fn(k, |i, _| b[active[i]]);
        let vals = match g_s.clone().cholesky() {
            Some(ch) => ch.solve(&b_s),
            None => g_s
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                * &b_s,
        };
        // at the least-squares optimum ½vᵀGv − bᵀv = −½ bᵀv
        let energy = -0.5 * b_s.dot(&vals) + lambda * k as f64;
        let sigma: Vec<u8> = (0..n).map(|r| u8::from(mask & (1 << r) != 0)).collect();
        let better = if energy < best_energy - tie_tol {
            true
        } else if energy <= best_energy + tie_tol {
            let best_k = best_sigma.iter().filter(|&&s| s != 0).count();
            k < best_k || (k == best_k && sigma < best_sigma)
        } else {
            false
        };
        if better {
            best_energy = energy;
            best_sigma = sigma;
            best_vals = vals.iter().copied().collect();
        }
    }

    let mut r = Array1::zeros(n);
    let active = best_sigma.iter().enumerate().filter(|(_, &s)| s != 0).map(|(i, _)| i);
    for (i, v) in active.zip(best_vals) {
        r[i] = v;
    }
    Ok(BruteForceResult {
        r,
        sigma: best_sigma,
        energy: best_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::objective;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_hand_case() {
        let p = ProblemInstance::new(Array2::eye(2), array![1.0, 0.0]).unwrap();
        let res = brute_force_l0rbcs(&p, Threshold::from_lambda(0.3)).unwrap();
        assert_eq!(res.sigma, vec![1, 0]);
        assert_abs_diff_eq!(res.r[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.energy, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn large_lambda_selects_empty_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let lambda = 0.5 * y.dot(&y) + 1e-3;
        let p = ProblemInstance::new(a, y).unwrap();
        let res = brute_force_l0rbcs(&p, Threshold::from_lambda(lambda)).unwrap();
        assert!(res.sigma.iter().all(|&s| s == 0));
        assert_eq!(res.energy, 0.0);
    }

    #[test]
    fn zero_lambda_reaches_least_squares_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = Array2::from_shape_fn((8, 5), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0));
        let p = ProblemInstance::new(a.clone(), y.clone()).unwrap();
        let res = brute_force_l0rbcs(&p, Threshold::from_lambda(0.0)).unwrap();
        let am = DMatrix::from_fn(8, 5, |k, r| a[[k, r]]);
        let x = (am.transpose() * &am)
            .cholesky()
            .unwrap()
            .solve(&(am.transpose() * DVector::from_iterator(8, y.iter().copied())));
        let full_resid = DVector::from_iterator(8, y.iter().copied()) - &am * x;
        let got = objective(&p, res.r.as_slice().unwrap(), &res.sigma, Threshold::from_lambda(0.0)).unwrap();
        assert_abs_diff_eq!(got, 0.5 * (full_resid.norm_squared() - y.dot(&y)), epsilon = 1e-10);
    }

    #[test]
    fn collinear_columns_use_pseudo_inverse() {
        let a = array![[1.0, 2.0], [1.0, 2.0]];
        let p = ProblemInstance::new(a, array![1.0, 1.0]).unwrap();
        let res = brute_force_l0rbcs(&p, Threshold::from_lambda(0.0)).unwrap();
        assert!(res.energy.is_finite());
        // the single column already fits y exactly; smaller support wins the tie
        assert_eq!(res.sigma.iter().filter(|&&s| s == 1).count(), 1);
        assert_abs_diff_eq!(res.energy, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = Array2::from_shape_fn((6, 8), |_| rng.random_range(-1.0..1.0));
            let y = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
            let p = ProblemInstance::new(a, y).unwrap();
            let th = Threshold::from_eta(0.3);
            let res = brute_force_l0rbcs(&p, th).unwrap();
            for _ in 0..100 {
                let r: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
                let s: Vec<u8> = (0..8).map(|_| rng.random_range(0..2)).collect();
                assert!(res.energy <= objective(&p, &r, &s, th).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn refuses_large_problems() {
        let p = ProblemInstance::new(Array2::zeros((2, 21)) + 1.0, array![1.0, 1.0]).unwrap();
        assert!(matches!(
            brute_force_l0rbcs(&p, Threshold::from_eta(0.1)),
            Err(Error::TooLarge { n: 21, .. })
        ));
    }
}
