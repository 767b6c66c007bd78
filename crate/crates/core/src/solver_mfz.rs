//! Mean-field CIM with chaotic amplitude control and a Zeeman term (MFZ-CIM).
//!
//! Deterministic forward-Euler integration of
//!
//! ```text
//! dc_r/dt = (−1 + p − c_r²) c_r + K · j · e_r · (R_r h_r − (η²/4)√τ)
//! de_r/dt = −β (c_r² − τ) e_r
//! ```
//!
//! where `h_r` is either the continuous local field
//! `J̃ (R ∘ ¼(c + √τ)) + (√τ/2) hz` or the binarized one
//! `(√τ/2) (J̃ (R ∘ σ) + hz)` with `σ = H(c)`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::model::{HyperParams, Threshold};
use crate::operator::GramOperator;
use crate::orchestrator::{extract_support, pump_schedule};

/// Standard deviation of the vacuum-noise initial amplitudes (variance 1e-4).
pub const INIT_AMPLITUDE_STD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum LocalFieldMode {
    Continuous,
    Binarized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfzState {
    pub c: Vec<f64>,
    pub e: Vec<f64>,
    pub t: f64,
}

pub fn init_mfz<G: Rng + ?Sized>(n: usize, rng: &mut G) -> MfzState {
    let normal = Normal::new(0.0, INIT_AMPLITUDE_STD).expect("valid std");
    MfzState {
        c: (0..n).map(|_| normal.sample(rng)).collect(),
        e: vec![1.0; n],
        t: 0.0,
    }
}

/// `h_r = −Σ_{r'≠r} G_{rr'} R_{r'} ¼(c_{r'} + √τ) + (√τ/2) hz_r`.
pub fn local_field_continuous<O: GramOperator + ?Sized>(
    op: &O,
    r: &[f64],
    c: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    let n = op.dim();
    check_len("signal R", n, r.len())?;
    check_len("amplitudes c", n, c.len())?;
    let mut h = vec![0.0; n];
    continuous_into(op, r, c, tau, &mut vec![0.0; n], &mut h);
    Ok(h)
}

/// `h_r^{BN} = −(√τ/2)(Σ_{r'≠r} G_{rr'} R_{r'} σ_{r'} − hz_r)`.
pub fn local_field_binarized<O: GramOperator + ?Sized>(
    op: &O,
    r: &[f64],
    sigma: &[u8],
    tau: f64,
) -> Result<Vec<f64>> {
    let n = op.dim();
    check_len("signal R", n, r.len())?;
    check_len("support σ", n, sigma.len())?;
    crate::model::ensure_binary("σ", sigma)?;
    let mut h = vec![0.0; n];
    let active = crate::operator::active_indices(sigma);
    binarized_into(op, r, &active, tau, &mut Vec::new(), &mut h);
    Ok(h)
}

fn continuous_into<O: GramOperator + ?Sized>(
    op: &O,
    r: &[f64],
    c: &[f64],
    tau: f64,
    scratch: &mut [f64],
    h: &mut [f64],
) {
    let sq = tau.sqrt();
    for ((w, &ri), &ci) in scratch.iter_mut().zip(r).zip(c) {
        *w = ri * 0.25 * (ci + sq);
    }
    op.apply_coupling(scratch, h);
    for (hi, &z) in h.iter_mut().zip(op.zeeman()) {
        *hi += 0.5 * sq * z;
    }
}

fn binarized_into<O: GramOperator + ?Sized>(
    op: &O,
    r: &[f64],
    active: &[usize],
    tau: f64,
    vals: &mut Vec<f64>,
    h: &mut [f64],
) {
    let half_sq = 0.5 * tau.sqrt();
    vals.clear();
    vals.extend(active.iter().map(|&i| r[i]));
    op.apply_coupling_sparse(active, vals, h);
    for (hi, &z) in h.iter_mut().zip(op.zeeman()) {
        *hi = half_sq * (*hi + z);
    }
}

/// Fixed inputs of one MFZ-CIM call plus scratch space.
pub struct MfzIntegrator<'a, O: GramOperator + ?Sized> {
    op: &'a O,
    r: &'a [f64],
    params: &'a HyperParams,
    mode: LocalFieldMode,
    /// `(η²/4)√τ`
    bias: f64,
    field: Vec<f64>,
    scratch: Vec<f64>,
    active: Vec<usize>,
    vals: Vec<f64>,
}

impl<'a, O: GramOperator + ?Sized> MfzIntegrator<'a, O> {
    pub fn new(
        op: &'a O,
        r: &'a [f64],
        params: &'a HyperParams,
        eta: Threshold,
        mode: LocalFieldMode,
    ) -> Result<Self> {
        let n = op.dim();
        check_len("signal R", n, r.len())?;
        Ok(MfzIntegrator {
            op,
            r,
            params,
            mode,
            bias: 0.25 * eta.eta * eta.eta * params.tau.sqrt(),
            field: vec![0.0; n],
            scratch: vec![0.0; n],
            active: Vec::new(),
            vals: Vec::new(),
        })
    }

    /// Local field at the current state, as used by [`Self::step`].
    pub fn field(&mut self, state: &MfzState) -> &[f64] {
        match self.mode {
            LocalFieldMode::Continuous => {
                continuous_into(self.op, self.r, &state.c, self.params.tau, &mut self.scratch, &mut self.field)
            }
            LocalFieldMode::Binarized => {
                self.active.clear();
                self.active
                    .extend(state.c.iter().enumerate().filter_map(|(i, &c)| (c > 0.0).then_some(i)));
                binarized_into(self.op, self.r, &self.active, self.params.tau, &mut self.vals, &mut self.field)
            }
        }
        &self.field
    }

    /// `K · j · e_r · (R_r h_r − (η²/4)√τ)` at the current state.
    pub fn injection(&mut self, state: &MfzState) -> Vec<f64> {
        let kj = self.params.k * self.params.j;
        let bias = self.bias;
        let r = self.r;
        let h = self.field(state);
        (0..h.len()).map(|i| kj * state.e[i] * (r[i] * h[i] - bias)).collect()
    }

    /// One forward-Euler step at pump rate `p`.
    pub fn step(&mut self, state: &mut MfzState, p: f64) -> Result<()> {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!("pump rate must be finite, got {p}")));
        }
        let hp = self.params;
        let kj = hp.k * hp.j;
        let gain = -1.0 + p - if hp.modified_loss { hp.j } else { 0.0 };
        let bias = self.bias;
        let r = self.r;
        self.field(state);
        for i in 0..state.c.len() {
            let c = state.c[i];
            let e = state.e[i];
            let dc = (gain - c * c) * c + kj * e * (r[i] * self.field[i] - bias);
            let de = -hp.beta * (c * c - hp.tau) * e;
            state.c[i] = c + hp.dt * dc;
            state.e[i] = e + hp.dt * de;
        }
        state.t += hp.dt;
        if let Some(i) = state
            .c
            .iter()
            .zip(&state.e)
            .position(|(c, e)| !c.is_finite() || !e.is_finite() || *e <= 0.0)
        {
            return Err(Error::Divergence {
                index: i,
                t: state.t,
                detail: format!("c = {}, e = {}", state.c[i], state.e[i]),
            });
        }
        Ok(())
    }
}

/// One decimated sample of an amplitude trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MfzSample {
    pub step: usize,
    pub t: f64,
    pub c: Vec<f64>,
    pub e: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Maximum number of samples per spin; `None` keeps every step.
    pub max_samples: Option<usize>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            max_samples: Some(500),
        }
    }
}

impl TraceOptions {
    pub(crate) fn stride(&self, n_steps: usize) -> usize {
        match self.max_samples {
            None => 1,
            Some(max) => n_steps.div_ceil(max.saturating_sub(2).max(1)).max(1),
        }
    }

    pub(crate) fn keep(&self, step: usize, n_steps: usize) -> bool {
        step == n_steps || step.is_multiple_of(self.stride(n_steps))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MfzTrace {
    pub samples: Vec<MfzSample>,
}

impl MfzTrace {
    /// CSV with columns `step,t,spin_index,c,e`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,t,spin_index,c,e")?;
        self.write_rows(w)
    }

    pub fn write_rows<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.samples {
            for (i, (c, e)) in s.c.iter().zip(&s.e).enumerate() {
                writeln!(w, "{},{},{},{},{}", s.step, s.t, i, c, e)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MfzRun {
    pub state: MfzState,
    pub sigma: Vec<u8>,
    /// Smallest `e_r` seen over all spins and steps.
    pub min_e: f64,
    pub trace: Option<MfzTrace>,
}

/// One CIM call: fresh initial state, `n_steps` Euler steps with the pump
/// schedule restarted at `t = 0`, support read off the final amplitudes.
pub fn run_mfz<O: GramOperator + ?Sized, G: Rng + ?Sized>(
    op: &O,
    r: &[f64],
    params: &HyperParams,
    eta: Threshold,
    mode: LocalFieldMode,
    rng: &mut G,
    trace: Option<TraceOptions>,
) -> Result<MfzRun> {
    params.validate()?;
    let mut integ = MfzIntegrator::new(op, r, params, eta, mode)?;
    let mut state = init_mfz(op.dim(), rng);
    let mut samples = trace.map(|_| Vec::new());
    let record = |samples: &mut Option<Vec<MfzSample>>, step: usize, s: &MfzState| {
        if let (Some(v), Some(opts)) = (samples.as_mut(), trace) {
            if opts.keep(step, params.n_steps) {
                v.push(MfzSample {
                    step,
                    t: s.t,
                    c: s.c.clone(),
                    e: s.e.clone(),
                });
            }
        }
    };
    record(&mut samples, 0, &state);
    let mut min_e = min_of(&state.e);
    for step in 1..=params.n_steps {
        let p = pump_schedule(state.t, params.p_thr, params.d);
        integ.step(&mut state, p)?;
        min_e = min_e.min(min_of(&state.e));
        record(&mut samples, step, &state);
    }
    let sigma = extract_support(&state.c);
    Ok(MfzRun {
        state,
        sigma,
        min_e,
        trace: samples.map(|samples| MfzTrace { samples }),
    })
}

pub(crate) fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coupling_from_observation, CouplingForm};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_coupling(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CouplingForm {
        let a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
        coupling_from_observation(&a, &y).unwrap()
    }

    fn zero_coupling(n: usize) -> CouplingForm {
        CouplingForm::from_gram(Array2::zeros((n, n)), Array1::zeros(n)).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_unit_feedback() {
        let a = init_mfz(64, &mut ChaCha8Rng::seed_from_u64(4));
        let b = init_mfz(64, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert!(a.e.iter().all(|&e| e == 1.0));
        assert_eq!(a.t, 0.0);
    }

    #[test]
    fn init_variance() {
        let s = init_mfz(100_000, &mut ChaCha8Rng::seed_from_u64(12));
        let n = s.c.len() as f64;
        let mean = s.c.iter().sum::<f64>() / n;
        let var = s.c.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.9e-4..=1.1e-4).contains(&var), "{var}");
    }

    #[test]
    fn continuous_field_edge_cases() {
        let c1 = coupling_from_observation(&array![[2.0]], &array![1.5]).unwrap();
        let h = local_field_continuous(&c1, &[3.0], &[0.7], 0.64).unwrap();
        assert_abs_diff_eq!(h[0], 0.4 * 3.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
        let cz = coupling_from_observation(&a, &Array1::zeros(4)).unwrap();
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(local_field_continuous(&cz, &[0.0; 5], &c, 1.0).unwrap().iter().all(|&v| v == 0.0));

        let cf = random_coupling(&mut rng, 4, 5);
        let tau: f64 = 0.5;
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = local_field_continuous(&cf, &r, &[-tau.sqrt(); 5], tau).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(h[i], 0.5 * tau.sqrt() * cf.hz[i], epsilon = 1e-14);
        }
        assert!(local_field_continuous(&cf, &r[..4], &[0.0; 5], tau).is_err());
    }

    #[test]
    fn binarized_field_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cf = random_coupling(&mut rng, 6, 7);
        let r: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0 = local_field_binarized(&cf, &r, &[0; 7], 0.3).unwrap();
        for i in 0..7 {
            assert_abs_diff_eq!(h0[i], 0.5 * 0.3f64.sqrt() * cf.hz[i], epsilon = 1e-14);
        }
        let s = [1, 0, 1, 1, 0, 0, 1];
        let h1 = local_field_binarized(&cf, &r, &s, 1.0).unwrap();
        let h2 = local_field_binarized(&cf, &r, &s, 2.0).unwrap();
        for i in 0..7 {
            assert_abs_diff_eq!(h2[i], 2f64.sqrt() * h1[i], epsilon = 1e-13);
        }
        assert!(local_field_binarized(&cf, &r, &[2, 0, 0, 0, 0, 0, 0], 1.0).is_err());
    }

    #[test]
    fn binarized_equals_continuous_at_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &tau in &[1.0f64, 0.15, 2.5] {
            for _ in 0..10 {
                let cf = random_coupling(&mut rng, 5, 8);
                let r: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
                let sigma: Vec<u8> = (0..8).map(|_| rng.random_range(0..2)).collect();
                let c: Vec<f64> = sigma
                    .iter()
                    .map(|&s| if s == 1 { tau.sqrt() } else { -tau.sqrt() })
                    .collect();
                let hc = local_field_continuous(&cf, &r, &c, tau).unwrap();
                let hb = local_field_binarized(&cf, &r, &sigma, tau).unwrap();
                for i in 0..8 {
                    assert_abs_diff_eq!(hc[i], hb[i], epsilon = 1e-12);
                }
                // identical candidate ranking
                let eta = 0.4;
                let bias = 0.25 * eta * eta * tau.sqrt();
                for i in 0..8 {
                    assert_eq!(r[i] * hc[i] - bias > 0.0, r[i] * hb[i] - bias > 0.0);
                }
            }
        }
    }

    #[test]
    fn uncoupled_scalar_settles_on_pitchfork_branch() {
        let op = zero_coupling(1);
        let hp = HyperParams {
            k: 0.0,
            ..Default::default()
        };
        let r = [0.0];
        let mut integ = MfzIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.5), LocalFieldMode::Continuous).unwrap();
        let mut s = MfzState {
            c: vec![0.1],
            e: vec![1.0],
            t: 0.0,
        };
        for _ in 0..1000 {
            integ.step(&mut s, 1.4).unwrap();
        }
        assert_abs_diff_eq!(s.t, 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.c[0], 0.4f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn feedback_frozen_at_target_amplitude() {
        let op = zero_coupling(2);
        let hp = HyperParams {
            tau: 0.49,
            ..Default::default()
        };
        let r = [0.0, 0.0];
        let mut integ = MfzIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.3), LocalFieldMode::Binarized).unwrap();
        let mut s = MfzState {
            c: vec![0.7, -0.7],
            e: vec![2.5, 0.3],
            t: 0.0,
        };
        integ.step(&mut s, 1.2).unwrap();
        assert_eq!(s.e, vec![2.5, 0.3]);
    }

    #[test]
    fn zero_feedback_decouples_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = random_coupling(&mut rng, 4, 3);
        let hp = HyperParams {
            k: 0.0,
            ..Default::default()
        };
        let r = [1.0, -2.0, 0.5];
        let mut integ = MfzIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.3), LocalFieldMode::Continuous).unwrap();
        let mut full = MfzState {
            c: vec![0.2, -0.4, 0.9],
            e: vec![1.0, 2.0, 0.5],
            t: 0.0,
        };
        let mut perturbed = full.clone();
        perturbed.c[1] = 1.3;
        perturbed.e[1] = 0.1;
        for _ in 0..50 {
            integ.step(&mut full, 1.1).unwrap();
            integ.step(&mut perturbed, 1.1).unwrap();
        }
        for i in [0, 2] {
            assert_eq!(full.c[i], perturbed.c[i]);
            assert_eq!(full.e[i], perturbed.e[i]);
        }
    }

    #[test]
    fn divergence_names_offending_spin() {
        let op = zero_coupling(3);
        let hp = HyperParams::default();
        let r = [0.0; 3];
        let mut integ = MfzIntegrator::new(&op, &r, &hp, Threshold::from_eta(0.3), LocalFieldMode::Continuous).unwrap();
        let mut s = MfzState {
            c: vec![0.1, 1e200, 0.1],
            e: vec![1.0; 3],
            t: 0.0,
        };
        match integ.step(&mut s, 1.0) {
            Err(Error::Divergence { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
        assert!(integ.step(&mut s, f64::NAN).is_err());
    }

    #[test]
    fn empty_problem_drives_all_spins_off() {
        let op = zero_coupling(50);
        let hp = HyperParams::default();
        let r = vec![0.0; 50];
        let run = run_mfz(
            &op,
            &r,
            &hp,
            Threshold::from_eta(0.5),
            LocalFieldMode::Continuous,
            &mut ChaCha8Rng::seed_from_u64(8),
            None,
        )
        .unwrap();
        assert!(run.sigma.iter().all(|&s| s == 0));
        assert!(run.state.c.iter().all(|&c| c < 0.0));
    }

    #[test]
    fn run_is_deterministic_and_trace_decimated() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let op = random_coupling(&mut rng, 10, 16);
        let r: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hp = HyperParams::default();
        let go = |seed| {
            run_mfz(
                &op,
                &r,
                &hp,
                Threshold::from_eta(0.3),
                LocalFieldMode::Binarized,
                &mut ChaCha8Rng::seed_from_u64(seed),
                Some(TraceOptions::default()),
            )
            .unwrap()
        };
        let a = go(1);
        let b = go(1);
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.state, b.state);
        let trace = a.trace.unwrap();
        assert!(trace.samples.len() <= 500);
        assert_eq!(trace.samples.first().unwrap().step, 0);
        assert_eq!(trace.samples.last().unwrap().step, hp.n_steps);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,t,spin_index,c,e\n"));
        assert_eq!(text.lines().count(), 1 + 16 * trace.samples.len());
    }

    #[test]
    fn full_trace_keeps_every_step() {
        let op = zero_coupling(2);
        let hp = HyperParams {
            n_steps: 37,
            ..Default::default()
        };
        let run = run_mfz(
            &op,
            &[0.0, 0.0],
            &hp,
            Threshold::from_eta(0.2),
            LocalFieldMode::Continuous,
            &mut ChaCha8Rng::seed_from_u64(0),
            Some(TraceOptions { max_samples: None }),
        )
        .unwrap();
        assert_eq!(run.trace.unwrap().samples.len(), 38);
    }
}
