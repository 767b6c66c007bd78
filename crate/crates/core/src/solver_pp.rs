//! Positive-P CIM with chaotic amplitude control.
//!
//! Euler–Maruyama integration of the g-normalized mean amplitude `μ`, the
//! fluctuation moments `n = ⟨δa†δa⟩`, `m = ⟨δa²⟩` and the error-feedback
//! amplitude `e`. One standard-normal vector `w` is drawn per step and feeds
//! both the measurement back-action on `μ` and the measured amplitude
//! `μ̃ = μ + sqrt(g²/(4jΔt)) · w`; white noise over a step of length `Δt`
//! contributes `√Δt · w` to the SDE and `w / √Δt` to the measurement.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::model::{HyperParams, Threshold};
use crate::operator::GramOperator;
use crate::orchestrator::{extract_support, pump_schedule};
use crate::solver_mfz::{min_of, TraceOptions};

/// Amplitudes beyond this magnitude abort the trial.
pub const DIVERGENCE_BOUND: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PpState {
    pub mu: Vec<f64>,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub e: Vec<f64>,
    pub t: f64,
}

pub fn init_pp(n: usize) -> PpState {
    PpState {
        mu: vec![0.0; n],
        n: vec![0.0; n],
        m: vec![0.0; n],
        e: vec![1.0; n],
        t: 0.0,
    }
}

/// Standard-normal samples for one step, one per spin.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub w: Vec<f64>,
}

impl NoiseDraw {
    pub fn sample<G: Rng + ?Sized>(n: usize, rng: &mut G) -> Self {
        NoiseDraw {
            w: (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        }
    }
}

/// `μ̃_r = μ_r + sqrt(g²/(4 j Δt)) · w_r`.
pub fn measured_amplitude(state: &PpState, noise: &NoiseDraw, params: &HyperParams) -> Result<Vec<f64>> {
    check_len("noise draw", state.mu.len(), noise.w.len())?;
    if params.j <= 0.0 {
        return Err(Error::Config(format!(
            "out-coupling rate j must be positive for the measured amplitude, got {}",
            params.j
        )));
    }
    let scale = (params.g2 / (4.0 * params.j * params.dt)).sqrt();
    Ok(state.mu.iter().zip(&noise.w).map(|(&mu, &w)| mu + scale * w).collect())
}

/// `h_r = −Σ_{r'≠r} G_{rr'} R_{r'} ½(μ̃_{r'} + √τ) + √τ hz_r`.
pub fn local_field_pp<O: GramOperator + ?Sized>(
    op: &O,
    r: &[f64],
    mu_tilde: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    let n = op.dim();
    check_len("signal R", n, r.len())?;
    check_len("measured amplitudes", n, mu_tilde.len())?;
    let mut h = vec![0.0; n];
    field_into(op, r, mu_tilde, tau, &mut vec![0.0; n], &mut h);
    Ok(h)
}

fn field_into<O: GramOperator + ?Sized>(
    op: &O,
    r: &[f64],
    mu_tilde: &[f64],
    tau: f64,
    scratch: &mut [f64],
    h: &mut [f64],
) {
    let sq = tau.sqrt();
    for ((w, &ri), &mt) in scratch.iter_mut().zip(r).zip(mu_tilde) {
        *w = ri * 0.5 * (mt + sq);
    }
    op.apply_coupling(scratch, h);
    for (hi, &z) in h.iter_mut().zip(op.zeeman()) {
        *hi += sq * z;
    }
}

/// Fixed inputs of one Positive-P call plus scratch space.
pub struct PpIntegrator<'a, O: GramOperator + ?Sized> {
    op: &'a O,
    r: &'a [f64],
    params: &'a HyperParams,
    /// `√τ η² / 4`
    bias: f64,
    field: Vec<f64>,
    scratch: Vec<f64>,
    mu_tilde: Vec<f64>,
}

impl<'a, O: GramOperator + ?Sized> PpIntegrator<'a, O> {
    pub fn new(op: &'a O, r: &'a [f64], params: &'a HyperParams, eta: Threshold) -> Result<Self> {
        let n = op.dim();
        check_len("signal R", n, r.len())?;
        if params.j <= 0.0 {
            return Err(Error::Config(format!("out-coupling rate j must be positive, got {}", params.j)));
        }
        Ok(PpIntegrator {
            op,
            r,
            params,
            bias: 0.25 * params.tau.sqrt() * eta.eta * eta.eta,
            field: vec![0.0; n],
            scratch: vec![0.0; n],
            mu_tilde: vec![0.0; n],
        })
    }

    /// Measured amplitude computed during the last [`Self::step`].
    pub fn last_measurement(&self) -> &[f64] {
        &self.mu_tilde
    }

    /// One Euler–Maruyama step at pump rate `p` driven by `noise`.
    pub fn step(&mut self, state: &mut PpState, p: f64, noise: &NoiseDraw) -> Result<()> {
        let hp = self.params;
        let nn = state.mu.len();
        check_len("noise draw", nn, noise.w.len())?;
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!("pump rate must be finite, got {p}")));
        }
        let (g2, j, dt) = (hp.g2, hp.j, hp.dt);
        let meas = (g2 / (4.0 * j * dt)).sqrt();
        for ((mt, &mu), &w) in self.mu_tilde.iter_mut().zip(&state.mu).zip(&noise.w) {
            *mt = mu + meas * w;
        }
        field_into(self.op, self.r, &self.mu_tilde, hp.tau, &mut self.scratch, &mut self.field);

        let kj = hp.k * j;
        let diffusion = dt.sqrt() * (j * g2).sqrt();
        for i in 0..nn {
            let (mu, n, m, e) = (state.mu[i], state.n[i], state.m[i], state.e[i]);
            let mu2 = mu * mu;
            let nm = m + n;
            let inj = kj * e * (self.r[i] * self.field[i] - self.bias);
            let dmu = -(1.0 - p + j) * mu - mu * (mu2 + 2.0 * g2 * n + g2 * m) + inj;
            let dn = -2.0 * (1.0 + j) * n + 2.0 * p * m - 2.0 * mu2 * (2.0 * n + m) - j * nm * nm;
            let dm = -2.0 * (1.0 + j) * m + 2.0 * p * n - 2.0 * mu2 * (2.0 * m + n) + p
                - (mu2 + g2 * m)
                - j * nm * nm;
            let mt = self.mu_tilde[i];
            let de = -hp.beta * (mt * mt - hp.tau) * e;
            state.mu[i] = mu + dt * dmu + diffusion * nm * noise.w[i];
            state.n[i] = n + dt * dn;
            state.m[i] = m + dt * dm;
            state.e[i] = e + dt * de;
        }
        state.t += dt;
        for i in 0..nn {
            let vals = [state.mu[i], state.n[i], state.m[i], state.e[i]];
            if vals.iter().any(|v| !v.is_finite()) || state.mu[i].abs() > DIVERGENCE_BOUND {
                return Err(Error::Divergence {
                    index: i,
                    t: state.t,
                    detail: format!(
                        "mu = {}, n = {}, m = {}, e = {}",
                        state.mu[i], state.n[i], state.m[i], state.e[i]
                    ),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpSample {
    pub step: usize,
    pub t: f64,
    pub mu: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub e: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpTrace {
    pub samples: Vec<PpSample>,
}

impl PpTrace {
    /// CSV with columns `step,t,spin_index,mu,mu_tilde,n,m,e`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,t,spin_index,mu,mu_tilde,n,m,e")?;
        self.write_rows(w)
    }

    pub fn write_rows<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.samples {
            for i in 0..s.mu.len() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    s.step, s.t, i, s.mu[i], s.mu_tilde[i], s.n[i], s.m[i], s.e[i]
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PpRun {
    pub state: PpState,
    /// Measured amplitude of the final step; the support is read from it.
    pub mu_tilde: Vec<f64>,
    pub sigma: Vec<u8>,
    /// Smallest `e_r` seen over all spins and steps.
    pub min_e: f64,
    pub trace: Option<PpTrace>,
}

/// One CIM call drawing its noise from `rng`.
pub fn run_pp<O: GramOperator + ?Sized, G: Rng + ?Sized>(
    op: &O,
    r: &[f64],
    params: &HyperParams,
    eta: Threshold,
    rng: &mut G,
    trace: Option<TraceOptions>,
) -> Result<PpRun> {
    run_pp_with_noise(op, r, params, eta, |n| NoiseDraw::sample(n, rng), trace)
}

/// One CIM call with an explicit noise source, called exactly once per step.
pub fn run_pp_with_noise<O, F>(
    op: &O,
    r: &[f64],
    params: &HyperParams,
    eta: Threshold,
    mut noise: F,
    trace: Option<TraceOptions>,
) -> Result<PpRun>
where
    O: GramOperator + ?Sized,
    F: FnMut(usize) -> NoiseDraw,
{
    params.validate()?;
    let n = op.dim();
    let mut integ = PpIntegrator::new(op, r, params, eta)?;
    let mut state = init_pp(n);
    let mut samples: Option<Vec<PpSample>> = trace.map(|_| Vec::new());
    let mut min_e = min_of(&state.e);
    for step in 1..=params.n_steps {
        let p = pump_schedule(state.t, params.p_thr, params.d);
        let draw = noise(n);
        let before = samples.is_some().then(|| state.clone());
        integ.step(&mut state, p, &draw)?;
        min_e = min_e.min(min_of(&state.e));
        if let (Some(v), Some(opts), Some(prev)) = (samples.as_mut(), trace, before) {
            // the measurement belongs to the state it was taken from
            if opts.keep(step - 1, params.n_steps - 1) {
                v.push(PpSample {
                    step: step - 1,
                    t: prev.t,
                    mu: prev.mu,
                    mu_tilde: integ.last_measurement().to_vec(),
                    n: prev.n,
                    m: prev.m,
                    e: prev.e,
                });
            }
        }
    }
    let mu_tilde = integ.last_measurement().to_vec();
    let sigma = extract_support(&mu_tilde);
    Ok(PpRun {
        state,
        mu_tilde,
        sigma,
        min_e,
        trace: samples.map(|samples| PpTrace { samples }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coupling_from_observation, CouplingForm};
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_coupling(n: usize) -> CouplingForm {
        CouplingForm::from_gram(Array2::zeros((n, n)), Array1::zeros(n)).unwrap()
    }

    fn random_coupling(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CouplingForm {
        let a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
        coupling_from_observation(&a, &y).unwrap()
    }

    #[test]
    fn init_state() {
        let s = init_pp(7);
        assert!(s.mu.iter().chain(&s.n).chain(&s.m).all(|&v| v == 0.0));
        assert!(s.e.iter().all(|&v| v == 1.0));
        assert_eq!(s.t, 0.0);
    }

    #[test]
    fn measured_amplitude_noiseless_limit_and_variance() {
        let mut s = init_pp(3);
        s.mu = vec![0.3, -0.2, 1.0];
        let hp = HyperParams {
            g2: 0.0,
            ..Default::default()
        };
        let draw = NoiseDraw { w: vec![1.0, -2.0, 0.5] };
        assert_eq!(measured_amplitude(&s, &draw, &hp).unwrap(), s.mu);

        let hp = HyperParams {
            g2: 0.01,
            j: 0.5,
            dt: 0.02,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zero = init_pp(1);
        let samples: Vec<f64> = (0..200_000)
            .map(|_| measured_amplitude(&zero, &NoiseDraw::sample(1, &mut rng), &hp).unwrap()[0])
            .collect();
        let var = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
        let target = 0.01 / (4.0 * 0.5 * 0.02);
        // sample variance of N(0, σ²) has standard error σ²·sqrt(2/n)
        assert!((var - target).abs() < 4.0 * target * (2.0 / 200_000f64).sqrt(), "{var}");

        let hp = HyperParams {
            j: 0.0,
            ..Default::default()
        };
        assert!(matches!(measured_amplitude(&s, &draw, &hp), Err(Error::Config(_))));
    }

    #[test]
    fn local_field_cases() {
        let c1 = coupling_from_observation(&ndarray::array![[2.0]], &ndarray::array![1.5]).unwrap();
        let h = local_field_pp(&c1, &[3.0], &[0.1], 0.49).unwrap();
        assert_abs_diff_eq!(h[0], 0.7 * 3.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cf = random_coupling(&mut rng, 5, 6);
        let tau: f64 = 0.21;
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = local_field_pp(&cf, &r, &[-tau.sqrt(); 6], tau).unwrap();
        for i in 0..6 {
            assert_abs_diff_eq!(h[i], tau.sqrt() * cf.hz[i], epsilon = 1e-14);
        }

        // explicit double sum against the dense J̃ route
        let mt: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = local_field_pp(&cf, &r, &mt, tau).unwrap();
        let g = cf.gram();
        for i in 0..6 {
            let mut expect = tau.sqrt() * cf.hz[i];
            for k in 0..6 {
                if k != i {
                    expect -= g[[i, k]] * r[k] * 0.5 * (mt[k] + tau.sqrt());
                }
            }
            assert_abs_diff_eq!(h[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_step_from_vacuum() {
        let op = zero_coupling(1);
        let hp = HyperParams::default();
        let eta = Threshold::from_eta(0.5);
        let r = [0.0];
        let mut integ = PpIntegrator::new(&op, &r, &hp, eta).unwrap();
        let mut s = init_pp(1);
        integ.step(&mut s, 1.0, &NoiseDraw { w: vec![0.7] }).unwrap();
        assert_abs_diff_eq!(s.m[0], 0.02, epsilon = 1e-15);
        assert_eq!(s.n[0], 0.0);
        // only the injection bias moves μ: Δt · K j e (−√τ η²/4)
        assert_abs_diff_eq!(s.mu[0], 0.02 * -(0.25 * 0.25), epsilon = 1e-15);
    }

    #[test]
    fn vacuum_without_pump_or_feedback_is_fixed() {
        let op = zero_coupling(4);
        let hp = HyperParams {
            k: 0.0,
            ..Default::default()
        };
        let r = [0.5, -1.0, 2.0, 0.0];
        let mut integ = PpIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.3)).unwrap();
        let mut s = init_pp(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            integ.step(&mut s, 0.0, &NoiseDraw::sample(4, &mut rng)).unwrap();
        }
        assert!(s.mu.iter().chain(&s.n).chain(&s.m).all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_amplitude_settles_above_threshold() {
        let op = zero_coupling(1);
        let hp = HyperParams {
            g2: 0.0,
            k: 0.0,
            ..Default::default()
        };
        let r = [0.0];
        let mut integ = PpIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.3)).unwrap();
        let mut s = init_pp(1);
        s.mu[0] = 0.05;
        for _ in 0..2000 {
            integ.step(&mut s, 2.4, &NoiseDraw { w: vec![0.0] }).unwrap();
        }
        assert_abs_diff_eq!(s.mu[0], 0.4f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn one_draw_of_n_samples_per_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = random_coupling(&mut rng, 6, 9);
        let r: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hp = HyperParams {
            n_steps: 123,
            ..Default::default()
        };
        let mut calls = 0usize;
        let mut samples = 0usize;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(5);
        run_pp_with_noise(
            &op,
            &r,
            &hp,
            Threshold::from_eta(0.4),
            |n| {
                calls += 1;
                samples += n;
                NoiseDraw::sample(n, &mut noise_rng)
            },
            None,
        )
        .unwrap();
        assert_eq!(calls, 123);
        assert_eq!(samples, 123 * 9);
    }

    #[test]
    fn shared_draw_enters_amplitude_and_feedback() {
        // with a single nonzero draw, both μ and e respond to that same w
        let op = zero_coupling(1);
        let hp = HyperParams {
            g2: 0.04,
            k: 0.0,
            ..Default::default()
        };
        let r = [0.0];
        let mut integ = PpIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.3)).unwrap();
        let mut s = init_pp(1);
        s.n[0] = 0.1;
        s.m[0] = 0.2;
        let w = 1.3;
        integ.step(&mut s, 0.0, &NoiseDraw { w: vec![w] }).unwrap();
        let mt = (0.04f64 / (4.0 * 0.02)).sqrt() * w;
        assert_abs_diff_eq!(integ.last_measurement()[0], mt, epsilon = 1e-15);
        assert_abs_diff_eq!(s.e[0], 1.0 + 0.02 * (-0.2 * (mt * mt - 1.0)), epsilon = 1e-15);
        assert_abs_diff_eq!(s.mu[0], 0.02f64.sqrt() * 0.04f64.sqrt() * 0.3 * w, epsilon = 1e-15);
    }

    #[test]
    fn divergence_guard() {
        let op = zero_coupling(2);
        let hp = HyperParams::default();
        let r = [0.0, 0.0];
        let mut integ = PpIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.3)).unwrap();
        let mut s = init_pp(2);
        s.mu[1] = 150.0;
        match integ.step(&mut s, 1.0, &NoiseDraw { w: vec![0.0, 0.0] }) {
            Err(Error::Divergence { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn seeded_run_repeats_and_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let op = random_coupling(&mut rng, 8, 12);
        let r: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hp = HyperParams::default();
        let go = || {
            run_pp(
                &op,
                &r,
                &hp,
                Threshold::from_eta(0.3),
                &mut ChaCha8Rng::seed_from_u64(42),
                Some(TraceOptions::default()),
            )
            .unwrap()
        };
        let (a, b) = (go(), go());
        assert_eq!(a.state, b.state);
        assert_eq!(a.sigma, b.sigma);
        let trace = a.trace.unwrap();
        assert!(trace.samples.len() <= 500);
        let last = trace.samples.last().unwrap();
        assert_eq!(last.step, hp.n_steps - 1);
        assert_eq!(last.mu_tilde, a.mu_tilde);

        let coarse = run_pp(&op, &r, &hp, Threshold::from_eta(0.3), &mut ChaCha8Rng::seed_from_u64(42), Some(TraceOptions { max_samples: Some(3) }))
            .unwrap()
            .trace
            .unwrap();
        let steps: Vec<usize> = coarse.samples.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, hp.n_steps - 1]);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,t,spin_index,mu,mu_tilde,n,m,e\n"));
    }
}
