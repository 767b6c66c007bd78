use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::datagen::gen_instance;
use crate::error::{Error, Result};
use crate::harness::output::{meta_line, mix_seed, num, stats, text, CsvFile};
use crate::harness::{backend_code, Config, Report};
use crate::model::coupling_from_observation;
use crate::orchestrator::{alternating_minimize, AltOptions, Backend, CimTrace, Truth};

/// Positive-P error-amplitude traces for each `g²` on one fixed instance
/// (the first grid point), at the configured alternations.
pub fn cmd_sweep_g2(cfg: &Config) -> Result<Report> {
    cfg.validate()?;
    let i = &cfg.instance;
    let (a, alpha, nu, seed) = (i.a[0], i.alpha[0], i.nu[0], i.seed_base);
    let inst = gen_instance(i.n, alpha, a, nu, seed)?;
    let c = coupling_from_observation(&inst.matrix, &inst.y)?;
    let alts: Vec<usize> = cfg.solver.sweep_g2_alternations.iter().map(|k| k - 1).collect();
    let last = alts.iter().copied().max().unwrap_or(0);
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let meta = meta_line(&cfg.hash(), &[seed], &[("instance", crate::harness::instance_name(i.n, a, alpha, nu, seed))]);

    type Traces = Result<Vec<(usize, CimTrace)>>;
    let runs: Vec<(f64, Traces)> = cfg
        .solver
        .sweep_g2
        .par_iter()
        .map(|&g2| {
            let mut hp = cfg.params_for(Backend::PositiveP, nu);
            hp.g2 = g2;
            let opts = AltOptions {
                trace_alternations: alts.clone(),
                stop_after: Some(last + 1),
                ..cfg.alt_options()
            };
            let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(&[seed, backend_code(Backend::PositiveP), g2.to_bits()]));
            let res = alternating_minimize(&c, Backend::PositiveP, &hp, &vec![0.0; i.n], None, &opts, &mut rng);
            (g2, res.map(|o| o.traces))
        })
        .collect();

    let mut files = Vec::new();
    let mut trace = CsvFile::create(&out.join("g2_trace.csv"), &meta, "g2,alternation,step,t,spin,e")?;
    let mut summary = CsvFile::create(
        &out.join("g2_summary.csv"),
        &meta,
        "g2,alternation,status,median_final_e,median_log10_final_e,min_final_e,max_final_e,error",
    )?;
    let mut failures = 0;
    for (g2, res) in &runs {
        match res {
            Ok(traces) => {
                for (alt, t) in traces {
                    let CimTrace::PositiveP(t) = t else { continue };
                    for s in &t.samples {
                        for (spin, e) in s.e.iter().enumerate() {
                            trace.line(&format!("{g2},{},{},{},{spin},{e}", alt + 1, s.step, s.t))?;
                        }
                    }
                    let fin = t.samples.last().map(|s| s.e.clone()).unwrap_or_default();
                    let logs: Vec<f64> = fin.iter().map(|e| e.log10()).collect();
                    let (st, sl) = (stats(&fin), stats(&logs));
                    summary.line(&format!(
                        "{g2},{},ok,{},{},{},{},",
                        alt + 1,
                        num(Some(st.median)),
                        num(Some(sl.median)),
                        num(Some(st.min)),
                        num(Some(st.max))
                    ))?;
                }
            }
            Err(e) => {
                failures += 1;
                summary.line(&format!("{g2},,failed,,,,,{}", text(&e.to_string())))?;
            }
        }
    }
    files.push(trace.finish()?);
    files.push(summary.finish()?);
    Ok(Report {
        files,
        trials: runs.len(),
        failures,
    })
}

/// RMSE versus `a` at fixed noise for each back-end and target amplitude;
/// the mean-field back-ends use the `(−1 + p − j − c²)` loss term.
pub fn cmd_sweep_tau(cfg: &Config) -> Result<Report> {
    cfg.validate()?;
    let s = &cfg.solver;
    let (nu, alpha) = (s.sweep_tau_nu, s.sweep_tau_alpha);
    let n = cfg.instance.n;
    let seeds = cfg.seeds();
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let meta = meta_line(
        &cfg.hash(),
        &seeds,
        &[("modified_loss", "true".into()), ("nu", nu.to_string()), ("alpha", alpha.to_string())],
    );

    let mut tasks = Vec::new();
    for &a in &cfg.instance.a {
        for &b in &s.backends {
            for &tau in &s.sweep_tau {
                for &seed in &seeds {
                    tasks.push((a, b, tau, seed));
                }
            }
        }
    }
    let results: Vec<std::result::Result<(f64, f64), String>> = tasks
        .par_iter()
        .map(|&(a, b, tau, seed)| {
            let run = || -> Result<(f64, f64)> {
                let inst = gen_instance(n, alpha, a, nu, seed)?;
                let c = coupling_from_observation(&inst.matrix, &inst.y)?;
                let mut hp = cfg.params_for(b, nu);
                hp.tau = tau;
                hp.modified_loss = b.is_mean_field();
                let x = inst.x_true.as_ref().expect("generated").to_vec();
                let xi = inst.xi_true.clone().expect("generated");
                let opts = AltOptions {
                    trace_alternations: Vec::new(),
                    ..cfg.alt_options()
                };
                let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(&[seed, backend_code(b), tau.to_bits(), a.to_bits()]));
                let o = alternating_minimize(&c, b, &hp, &vec![0.0; n], Some(Truth { x: &x, xi: &xi }), &opts, &mut rng)?;
                let last = o.history.entries.last().expect("at least one alternation");
                Ok((last.rmse.unwrap_or(f64::NAN), last.hamming.unwrap_or(f64::NAN)))
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let mut files = Vec::new();
    let mut f = CsvFile::create(&out.join("tau_sweep.csv"), &meta, "model,tau,modified_loss,a,seed,status,rmse,hamming,error")?;
    for (&(a, b, tau, seed), r) in tasks.iter().zip(&results) {
        let ml = b.is_mean_field();
        match r {
            Ok((rmse, ham)) => f.line(&format!("{b},{tau},{ml},{a},{seed},ok,{rmse},{ham},"))?,
            Err(e) => f.line(&format!("{b},{tau},{ml},{a},{seed},failed,,,{}", text(e)))?,
        }
    }
    files.push(f.finish()?);

    let mut summary = CsvFile::create(
        &out.join("tau_summary.csv"),
        &meta,
        "model,tau,a,trials,failures,mean_rmse,mean_hamming",
    )?;
    let mut keys: Vec<(Backend, f64, f64)> = Vec::new();
    for &(a, b, tau, _) in &tasks {
        if !keys.contains(&(b, tau, a)) {
            keys.push((b, tau, a));
        }
    }
    for (b, tau, a) in keys {
        let group: Vec<&std::result::Result<(f64, f64), String>> = tasks
            .iter()
            .zip(&results)
            .filter(|(t, _)| (t.1, t.2, t.0) == (b, tau, a))
            .map(|(_, r)| r)
            .collect();
        let ok: Vec<(f64, f64)> = group.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        let fails = group.len() - ok.len();
        let rm = stats(&ok.iter().map(|v| v.0).collect::<Vec<_>>());
        let hm = stats(&ok.iter().map(|v| v.1).collect::<Vec<_>>());
        let present = |count: usize, v: f64| if count > 0 { v.to_string() } else { String::new() };
        summary.line(&format!(
            "{b},{tau},{a},{},{fails},{},{}",
            group.len(),
            present(rm.count, rm.mean),
            present(hm.count, hm.mean)
        ))?;
    }
    files.push(summary.finish()?);
    let failures = results.iter().filter(|r| r.is_err()).count();
    Ok(Report {
        files,
        trials: results.len(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &std::path::Path) -> Config {
        let mut c = Config::default();
        c.instance.n = 20;
        c.instance.seeds = 2;
        c.schedule.velo = 3;
        c.solver.n_steps = 100;
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn g2_trace_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.solver.sweep_g2_alternations = vec![1, 3];
        cfg.output.trace_samples = Some(10);
        let r = cmd_sweep_g2(&cfg).unwrap();
        assert_eq!(r.failures, 0);
        let rows = std::fs::read_to_string(dir.path().join("g2_trace.csv")).unwrap().lines().count() - 2;
        // spins × alternations × g² values, at most ten recorded steps each
        assert_eq!(rows % (20 * 2 * 2), 0);
        assert!((2..=10).contains(&(rows / 80)), "{rows}");
        let summary = std::fs::read_to_string(dir.path().join("g2_summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 2 + 4);
    }

    #[test]
    fn tau_grid_cardinality_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.instance.a = vec![0.1, 0.2];
        let r = cmd_sweep_tau(&cfg).unwrap();
        assert_eq!(r.trials, 2 * 3 * 2 * 2);
        let body = std::fs::read_to_string(dir.path().join("tau_sweep.csv")).unwrap();
        assert!(body.lines().next().unwrap().contains("modified_loss=true"));
        assert_eq!(body.lines().count(), 2 + r.trials);
        assert!(body.contains("mfz-bn,0.15,true,"));
        assert!(body.contains("pp,1,false,"));
    }
}
