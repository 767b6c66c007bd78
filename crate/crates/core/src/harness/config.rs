use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cdp::{CdpMethod, OffSupport};
use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::orchestrator::{AltOptions, Backend};
use crate::solver_mfz::TraceOptions;

/// One experiment description; every model parameter has a named field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub instance: InstanceConfig,
    pub solver: SolverConfig,
    pub schedule: ScheduleConfig,
    pub mri: MriConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub n: usize,
    pub alpha: Vec<f64>,
    pub a: Vec<f64>,
    pub nu: Vec<f64>,
    /// Seeds per grid point: `seed_base, seed_base + 1, ...`.
    pub seeds: usize,
    pub seed_base: u64,
    /// Read instance bundles from here instead of generating them.
    pub dir: Option<PathBuf>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            n: 500,
            alpha: vec![0.6],
            a: vec![0.1],
            nu: vec![0.05],
            seeds: 3,
            seed_base: 0,
            dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub backends: Vec<Backend>,
    pub g2: f64,
    pub j: f64,
    pub k: f64,
    pub beta: f64,
    /// Target amplitude for the mean-field back-ends.
    pub tau: f64,
    /// Target amplitude for Positive-P; falls back to `tau`.
    pub tau_pp: Option<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub modified_loss: bool,
    pub cdp: CdpMethod,
    pub off_support: OffSupport,
    pub dt_c: f64,
    pub jacobi_iters: usize,
    pub cg_max_iters: usize,
    pub cg_tol: f64,
    /// Report the best alternation instead of the last.
    pub keep_best: bool,
    /// Pick Positive-P `τ` and `η_end` from the noise level
    /// (ν = 0.05: τ = 0.21, η_end = 0.18; ν = 0.1: τ = 0.15, η_end = 0.35).
    pub noise_rules: bool,
    pub sweep_g2: Vec<f64>,
    /// 1-based alternation numbers traced by `sweep-g2`.
    pub sweep_g2_alternations: Vec<usize>,
    pub sweep_tau: Vec<f64>,
    pub sweep_tau_nu: f64,
    pub sweep_tau_alpha: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        SolverConfig {
            backends: Backend::ALL.to_vec(),
            g2: hp.g2,
            j: hp.j,
            k: hp.k,
            beta: hp.beta,
            tau: hp.tau,
            tau_pp: None,
            dt: hp.dt,
            n_steps: hp.n_steps,
            modified_loss: false,
            cdp: CdpMethod::Jacobi,
            off_support: OffSupport::Refit,
            dt_c: hp.dt_c,
            jacobi_iters: hp.jacobi_iters,
            cg_max_iters: hp.cg_max_iters,
            cg_tol: hp.cg_tol,
            keep_best: false,
            noise_rules: true,
            sweep_g2: vec![1e-7, 1e-1],
            sweep_g2_alternations: vec![2, 20],
            sweep_tau: vec![1.0, 0.15],
            sweep_tau_nu: 0.1,
            sweep_tau_alpha: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub p_thr: f64,
    pub d: f64,
    pub eta_init: f64,
    pub eta_end: f64,
    pub velo: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        ScheduleConfig {
            p_thr: hp.p_thr,
            d: hp.d,
            eta_init: hp.eta_init,
            eta_end: hp.eta_end,
            velo: hp.velo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MriConfig {
    /// Grayscale input (PGM or PNG); a synthetic head phantom when absent.
    pub image: Option<PathBuf>,
    pub size: usize,
    pub sparseness: f64,
    pub compression: f64,
    pub gamma: f64,
    /// Number of random masks (seeds `seed_base ..`).
    pub masks: usize,
    /// Solver seeds per mask and threshold.
    pub trials: usize,
    /// Fixed thresholds `η` (one run of 12 alternations each).
    pub etas: Vec<f64>,
    /// LASSO penalties for the baseline curve.
    pub lasso_lambdas: Vec<f64>,
    /// LASSO penalty of the warm start.
    pub lasso_init: f64,
    pub k_mfz: f64,
    pub k_pp: f64,
    pub d: f64,
    pub velo: usize,
}

impl Default for MriConfig {
    fn default() -> Self {
        MriConfig {
            image: None,
            size: 64,
            sparseness: 0.212,
            compression: 0.4,
            gamma: 1e-4,
            masks: 5,
            trials: 1,
            etas: vec![0.01, 0.02, 0.03, 0.05, 0.08, 0.12],
            lasso_lambdas: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            lasso_init: 3e-4,
            k_mfz: 0.1,
            k_pp: 0.01,
            d: 0.6,
            velo: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Add wall-clock seconds to history rows (breaks byte-identical reruns).
    pub wall_time: bool,
    pub history: bool,
    /// Alternation indices (0-based) whose CIM amplitudes are written out.
    pub trace_alternations: Vec<usize>,
    /// Samples kept per traced CIM call; all steps when absent.
    pub trace_samples: Option<usize>,
    pub images: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            wall_time: false,
            history: true,
            trace_alternations: Vec::new(),
            trace_samples: Some(500),
            images: true,
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

impl Config {
    /// Full random-data protocol: N = 2000, five sparseness levels, two noise
    /// levels, ten seeds.
    pub fn reference() -> Self {
        Config {
            instance: InstanceConfig {
                n: 2000,
                alpha: vec![0.6],
                a: vec![0.05, 0.1, 0.15, 0.2, 0.25],
                nu: vec![0.05, 0.1],
                seeds: 10,
                seed_base: 0,
                dir: None,
            },
            ..Config::default()
        }
    }

    /// Resets every solver, schedule and MRI knob to its default,
    /// keeping the instance grid, sweeps and output settings.
    pub fn apply_reference_params(&mut self) {
        let fresh = Config::default();
        let solver = SolverConfig {
            backends: std::mem::take(&mut self.solver.backends),
            sweep_g2: std::mem::take(&mut self.solver.sweep_g2),
            sweep_g2_alternations: std::mem::take(&mut self.solver.sweep_g2_alternations),
            sweep_tau: std::mem::take(&mut self.solver.sweep_tau),
            sweep_tau_nu: self.solver.sweep_tau_nu,
            sweep_tau_alpha: self.solver.sweep_tau_alpha,
            ..fresh.solver
        };
        self.solver = solver;
        self.schedule = fresh.schedule;
        let mri = MriConfig {
            image: self.mri.image.take(),
            masks: self.mri.masks,
            trials: self.mri.trials,
            etas: std::mem::take(&mut self.mri.etas),
            lasso_lambdas: std::mem::take(&mut self.mri.lasso_lambdas),
            ..fresh.mri
        };
        self.mri = mri;
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        hex::encode(digest)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.instance.seeds as u64).map(|s| self.instance.seed_base + s).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let i = &self.instance;
        if i.n == 0 {
            return bad("instance.n must be positive".into());
        }
        if i.alpha.is_empty() || i.a.is_empty() || i.nu.is_empty() {
            return bad("instance.alpha, instance.a and instance.nu must be non-empty".into());
        }
        if let Some(v) = i.alpha.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return bad(format!("instance.alpha entries must lie in (0, 1], got {v}"));
        }
        if let Some(v) = i.a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return bad(format!("instance.a entries must lie in [0, 1], got {v}"));
        }
        if let Some(v) = i.nu.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return bad(format!("instance.nu entries must be non-negative, got {v}"));
        }
        if i.seeds == 0 {
            return bad("instance.seeds must be at least 1".into());
        }
        if self.solver.backends.is_empty() {
            return bad("solver.backends must list at least one back-end".into());
        }
        if let Some(t) = self.solver.tau_pp {
            if !(t > 0.0) {
                return bad(format!("solver.tau_pp must be positive, got {t}"));
            }
        }
        for &b in &self.solver.backends {
            for &nu in &i.nu {
                self.params_for(b, nu).validate()?;
            }
        }
        let m = &self.mri;
        if !m.size.is_power_of_two() {
            return bad(format!("mri.size must be a power of two, got {}", m.size));
        }
        if !(m.sparseness > 0.0 && m.sparseness <= 1.0) || !(m.compression > 0.0 && m.compression <= 1.0) {
            return bad("mri.sparseness and mri.compression must lie in (0, 1]".into());
        }
        if m.masks == 0 || m.trials == 0 || m.etas.is_empty() {
            return bad("mri.masks, mri.trials and mri.etas must be non-empty".into());
        }
        if m.etas.iter().chain(&m.lasso_lambdas).any(|v| !(*v >= 0.0 && v.is_finite())) || m.lasso_init < 0.0 {
            return bad("mri thresholds and LASSO penalties must be non-negative".into());
        }
        if self.solver.sweep_g2.iter().any(|g| !(*g >= 0.0)) {
            return bad("solver.sweep_g2 entries must be non-negative".into());
        }
        if self.solver.sweep_g2_alternations.contains(&0) {
            return bad("solver.sweep_g2_alternations are 1-based".into());
        }
        if self.solver.sweep_tau.iter().any(|t| !(*t > 0.0)) {
            return bad("solver.sweep_tau entries must be positive".into());
        }
        Ok(())
    }

    /// Solver parameters for one back-end at noise level `nu`.
    pub fn params_for(&self, backend: Backend, nu: f64) -> HyperParams {
        let s = &self.solver;
        let sch = &self.schedule;
        let mut hp = HyperParams {
            g2: s.g2,
            j: s.j,
            k: s.k,
            beta: s.beta,
            tau: s.tau,
            dt: s.dt,
            n_steps: s.n_steps,
            p_thr: sch.p_thr,
            d: sch.d,
            eta_init: sch.eta_init,
            eta_end: sch.eta_end,
            velo: sch.velo,
            dt_c: s.dt_c,
            jacobi_iters: s.jacobi_iters,
            cg_max_iters: s.cg_max_iters,
            cg_tol: s.cg_tol,
            gamma: self.mri.gamma,
            modified_loss: s.modified_loss,
        };
        if backend == Backend::PositiveP {
            hp.tau = s.tau_pp.unwrap_or(s.tau);
        }
        if s.noise_rules {
            if close(nu, 0.05) {
                hp.eta_end = 0.18;
                if backend == Backend::PositiveP {
                    hp.tau = 0.21;
                }
            } else if close(nu, 0.1) {
                hp.eta_end = 0.35;
                if backend == Backend::PositiveP {
                    hp.tau = 0.15;
                }
            }
        }
        hp
    }

    /// MRI parameters: fixed `η`, `velo`, `d` and back-end specific `K`.
    pub fn mri_params_for(&self, backend: Backend, eta: f64) -> HyperParams {
        let mut hp = self.params_for(backend, f64::NAN);
        hp.eta_init = eta;
        hp.eta_end = eta;
        hp.velo = self.mri.velo;
        hp.d = self.mri.d;
        hp.k = if backend == Backend::PositiveP { self.mri.k_pp } else { self.mri.k_mfz };
        hp
    }

    pub fn alt_options(&self) -> AltOptions {
        AltOptions {
            method: self.solver.cdp,
            off_support: self.solver.off_support,
            keep_best: self.solver.keep_best,
            trace_alternations: self.output.trace_alternations.clone(),
            trace: TraceOptions {
                max_samples: self.output.trace_samples,
            },
            stop_after: None,
        }
    }
}
