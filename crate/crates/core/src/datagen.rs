//! Random instances of the observation model `y = A(ξ∘x) + w`.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;

/// Draws `A ~ N(0, 1/M)`, `x ~ N(0, 1)`, `round(a·N)` support positions and
/// `w ~ N(0, ν²)` from one ChaCha20 stream, in that order.
pub fn gen_instance(n: usize, alpha: f64, a: f64, nu: f64, seed: u64) -> Result<ProblemInstance> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be positive".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidInput(format!("a must lie in [0, 1], got {a}")));
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::InvalidInput(format!("nu must be a finite non-negative number, got {nu}")));
    }
    let m = ((alpha * n as f64).round() as usize).max(1);
    let k = (a * n as f64).round() as usize;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let std_a = (1.0 / m as f64).sqrt();
    let matrix = Array2::from_shape_simple_fn((m, n), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        std_a * z
    });
    let x = Array1::from_shape_simple_fn(n, || StandardNormal.sample(&mut rng));
    let mut xi = vec![0u8; n];
    for idx in rand::seq::index::sample(&mut rng, n, k) {
        xi[idx] = 1;
    }
    let noise = Array1::from_shape_simple_fn(m, || {
        let z: f64 = StandardNormal.sample(&mut rng);
        nu * z
    });

    let signal = Array1::from_iter(x.iter().zip(&xi).map(|(&v, &s)| if s == 1 { v } else { 0.0 }));
    let y = matrix.dot(&signal) + noise;

    let inst = ProblemInstance {
        matrix,
        y,
        x_true: Some(x),
        xi_true: Some(xi),
        sparseness: a,
        alpha,
        nu,
        seed,
    };
    inst.validate()?;
    Ok(inst)
}
