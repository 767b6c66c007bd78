//! Alternating minimization: CIM support step, CDP signal step, threshold update.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cdp::{cdp_minimize, CdpMethod, OffSupport};
use crate::error::{check_len, Error, Result};
use crate::model::{hamming_loss, rmse, HyperParams, Threshold};
use crate::operator::{objective, GramOperator};
use crate::solver_mfz::{run_mfz, LocalFieldMode, MfzTrace, TraceOptions};
use crate::solver_pp::{run_pp, PpTrace};

/// `p(t) = (p_thr − d) + 2d / (1 + exp(−(t − 4)/2))`.
pub fn pump_schedule(t: f64, p_thr: f64, d: f64) -> f64 {
    (p_thr - d) + 2.0 * d / (1.0 + (-(t - 4.0) / 2.0).exp())
}

/// `η_i = max(η_init (1 − i/velo), η_end)`.
pub fn eta_schedule(i: usize, eta_init: f64, eta_end: f64, velo: usize) -> f64 {
    (eta_init * (1.0 - i as f64 / velo as f64)).max(eta_end)
}

/// `σ_r = 1` iff the amplitude is strictly positive.
pub fn extract_support(amplitudes: &[f64]) -> Vec<u8> {
    amplitudes.iter().map(|&a| u8::from(a > 0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "mfz-bn")]
    MfzBinarized,
    #[serde(rename = "mfz-cn")]
    MfzContinuous,
    #[serde(rename = "pp")]
    PositiveP,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::MfzBinarized, Backend::MfzContinuous, Backend::PositiveP];

    pub fn name(self) -> &'static str {
        match self {
            Backend::MfzBinarized => "mfz-bn",
            Backend::MfzContinuous => "mfz-cn",
            Backend::PositiveP => "pp",
        }
    }

    pub fn is_mean_field(self) -> bool {
        !matches!(self, Backend::PositiveP)
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mfz-bn" => Ok(Backend::MfzBinarized),
            "mfz-cn" => Ok(Backend::MfzContinuous),
            "pp" => Ok(Backend::PositiveP),
            other => Err(Error::Config(format!("unknown backend {other:?} (expected mfz-bn, mfz-cn or pp)"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Ground truth for metric recording.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub x: &'a [f64],
    pub xi: &'a [u8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternationRecord {
    pub i: usize,
    pub eta: f64,
    pub sigma: Vec<u8>,
    pub r: Vec<f64>,
    /// Objective `½vᵀGv − hzᵀv + λ‖σ‖₀` after the CDP step, at this `η`.
    pub hamiltonian: f64,
    pub rmse: Option<f64>,
    pub hamming: Option<f64>,
    /// Smallest error-feedback amplitude `e_r` during the CIM call.
    pub min_e: f64,
    /// Wall-clock seconds spent in this alternation.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub entries: Vec<AlternationRecord>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_hamiltonian(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.hamiltonian).min_by(f64::total_cmp)
    }

    /// Rows `trial,i,eta,hamiltonian,rmse,hamming,min_e,seconds` (no header).
    /// Wall time is left empty unless `wall_time` is set, which keeps reruns
    /// byte-identical.
    pub fn write_csv_rows<W: Write>(&self, mut w: W, trial: &str, wall_time: bool) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                trial,
                e.i,
                e.eta,
                e.hamiltonian,
                opt(e.rmse),
                opt(e.hamming),
                e.min_e,
                if wall_time { e.seconds.to_string() } else { String::new() }
            )?;
        }
        Ok(())
    }
}

pub const HISTORY_CSV_HEADER: &str = "trial,i,eta,hamiltonian,rmse,hamming,min_e,seconds";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AltOptions {
    pub method: CdpMethod,
    pub off_support: OffSupport,
    /// Report the lowest-objective alternation (scored at the final `η`)
    /// instead of the last one.
    pub keep_best: bool,
    /// Alternation indices whose CIM amplitudes are traced.
    pub trace_alternations: Vec<usize>,
    pub trace: TraceOptions,
    /// Stop after this many alternations instead of `velo + 1`.
    pub stop_after: Option<usize>,
}

impl Default for AltOptions {
    fn default() -> Self {
        AltOptions {
            method: CdpMethod::Jacobi,
            off_support: OffSupport::Refit,
            keep_best: false,
            trace_alternations: Vec::new(),
            trace: TraceOptions::default(),
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CimTrace {
    MeanField(MfzTrace),
    PositiveP(PpTrace),
}

#[derive(Debug, Clone)]
pub struct AltOutcome {
    pub r: Vec<f64>,
    pub sigma: Vec<u8>,
    pub history: RunHistory,
    /// `(alternation index, trace)` for each requested alternation.
    pub traces: Vec<(usize, CimTrace)>,
    /// Number of CG solves that stopped on a breakdown.
    pub cg_breakdowns: usize,
}

/// Runs `velo + 1` alternations (`i = 0..=velo`, fewer with `stop_after`) of
/// CIM support estimation followed by a CDP signal update.
pub fn alternating_minimize<O, G>(
    op: &O,
    backend: Backend,
    params: &HyperParams,
    r_init: &[f64],
    truth: Option<Truth<'_>>,
    options: &AltOptions,
    rng: &mut G,
) -> Result<AltOutcome>
where
    O: GramOperator + ?Sized,
    G: Rng + ?Sized,
{
    params.validate()?;
    let n = op.dim();
    check_len("initial signal R", n, r_init.len())?;
    if let Some(t) = truth {
        check_len("ground-truth x", n, t.x.len())?;
        check_len("ground-truth ξ", n, t.xi.len())?;
    }

    let mut r = r_init.to_vec();
    let mut sigma = vec![0u8; n];
    let mut history = RunHistory::default();
    let mut traces = Vec::new();
    let mut cg_breakdowns = 0;
    let final_eta = Threshold::from_eta(eta_schedule(params.velo, params.eta_init, params.eta_end, params.velo));
    let mut best: Option<(f64, Vec<f64>, Vec<u8>)> = None;

    let rounds = options.stop_after.map_or(params.velo + 1, |k| k.min(params.velo + 1));
    for i in 0..rounds {
        let started = Instant::now();
        let eta = Threshold::from_eta(eta_schedule(i, params.eta_init, params.eta_end, params.velo));
        let trace = options.trace_alternations.contains(&i).then_some(options.trace);
        let fail = |source: Error| Error::Trial {
            alternation: i,
            source: Box::new(source),
        };

        let (new_sigma, min_e) = match backend {
            Backend::MfzBinarized | Backend::MfzContinuous => {
                let mode = if backend == Backend::MfzBinarized {
                    LocalFieldMode::Binarized
                } else {
                    LocalFieldMode::Continuous
                };
                let run = run_mfz(op, &r, params, eta, mode, rng, trace).map_err(fail)?;
                if let Some(t) = run.trace {
                    traces.push((i, CimTrace::MeanField(t)));
                }
                (run.sigma, run.min_e)
            }
            Backend::PositiveP => {
                let run = run_pp(op, &r, params, eta, rng, trace).map_err(fail)?;
                if let Some(t) = run.trace {
                    traces.push((i, CimTrace::PositiveP(t)));
                }
                (run.sigma, run.min_e)
            }
        };
        sigma = new_sigma;

        let out = cdp_minimize(op, &sigma, &r, options.method, options.off_support, params).map_err(fail)?;
        cg_breakdowns += usize::from(out.breakdown);
        r = out.r;

        let hamiltonian = objective(op, &r, &sigma, eta);
        let (rmse_v, hamming_v) = match truth {
            Some(t) => (Some(rmse(&r, &sigma, t.x, t.xi)?), Some(hamming_loss(&sigma, t.xi)?)),
            None => (None, None),
        };
        if options.keep_best {
            let score = objective(op, &r, &sigma, final_eta);
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, r.clone(), sigma.clone()));
            }
        }
        history.entries.push(AlternationRecord {
            i,
            eta: eta.eta,
            sigma: sigma.clone(),
            r: r.clone(),
            hamiltonian,
            rmse: rmse_v,
            hamming: hamming_v,
            min_e,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    if let Some((_, br, bs)) = best {
        r = br;
        sigma = bs;
    }
    Ok(AltOutcome {
        r,
        sigma,
        history,
        traces,
        cg_breakdowns,
    })
}
