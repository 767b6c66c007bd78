//! Seeded, reproducible experiments: instance generation, back-end runs,
//! the MRI pipeline, the g² and τ sweeps and CSV reports.

mod config;
mod mri_cmd;
mod output;
mod sweep;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

pub use config::{Config, InstanceConfig, MriConfig, OutputConfig, ScheduleConfig, SolverConfig};
pub use mri_cmd::cmd_mri;
pub use output::Stats;
pub use sweep::{cmd_sweep_g2, cmd_sweep_tau};

use crate::datagen::gen_instance;
use crate::error::{Error, Result};
use crate::model::{read_bundle, write_bundle};
use crate::model::{coupling_from_observation, ProblemInstance};
use crate::orchestrator::{alternating_minimize, Backend, CimTrace, RunHistory, Truth, HISTORY_CSV_HEADER};
use output::{meta_line, mix_seed, num, stats, text, CsvFile};

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub trials: usize,
    pub failures: usize,
}

/// Runs `f` on a pool of `workers` threads (all cores when 0).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn instance_name(n: usize, a: f64, alpha: f64, nu: f64, seed: u64) -> String {
    format!("N{n}_a{a}_alpha{alpha}_nu{nu}_seed{seed}")
}

/// Grid points `(a, alpha, nu, seed)` in a fixed order.
fn grid(cfg: &Config) -> Vec<(f64, f64, f64, u64)> {
    let i = &cfg.instance;
    let mut out = Vec::new();
    for &a in &i.a {
        for &alpha in &i.alpha {
            for &nu in &i.nu {
                for seed in cfg.seeds() {
                    out.push((a, alpha, nu, seed));
                }
            }
        }
    }
    out
}

/// Writes one instance bundle per grid point under `<out>/instances`.
pub fn cmd_gen(cfg: &Config) -> Result<Report> {
    cfg.validate()?;
    let root = cfg.output.dir.join("instances");
    let points = grid(cfg);
    let written: Vec<Result<PathBuf>> = points
        .par_iter()
        .map(|&(a, alpha, nu, seed)| {
            let inst = gen_instance(cfg.instance.n, alpha, a, nu, seed)?;
            let dir = root.join(instance_name(cfg.instance.n, a, alpha, nu, seed));
            write_bundle(&dir, &inst)?;
            Ok(dir)
        })
        .collect();
    let files = written.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Report {
        trials: files.len(),
        files,
        failures: 0,
    })
}

fn load_instances(cfg: &Config) -> Result<Vec<(String, ProblemInstance)>> {
    match &cfg.instance.dir {
        Some(dir) => {
            let mut names = Vec::new();
            for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
                let entry = entry.map_err(|e| Error::io(dir, e))?;
                if entry.path().join("meta.json").is_file() {
                    names.push(entry.file_name().to_string_lossy().into_owned());
                }
            }
            names.sort();
            if names.is_empty() {
                return Err(Error::Config(format!("no instance bundles found in {}", dir.display())));
            }
            names
                .into_iter()
                .map(|name| Ok((name.clone(), read_bundle(&dir.join(&name))?)))
                .collect()
        }
        None => grid(cfg)
            .into_par_iter()
            .map(|(a, alpha, nu, seed)| {
                let inst = gen_instance(cfg.instance.n, alpha, a, nu, seed)?;
                Ok((instance_name(cfg.instance.n, a, alpha, nu, seed), inst))
            })
            .collect(),
    }
}

fn backend_code(b: Backend) -> u64 {
    match b {
        Backend::MfzBinarized => 1,
        Backend::MfzContinuous => 2,
        Backend::PositiveP => 3,
    }
}

struct TrialOutcome {
    backend: Backend,
    name: String,
    inst_idx: usize,
    result: std::result::Result<(Vec<u8>, RunHistory, usize), String>,
    traces: Vec<(usize, CimTrace)>,
}

/// Runs every configured back-end on every instance and writes
/// `summary.csv`, `aggregate.csv`, `history_<backend>.csv`, `params.json`
/// and optional amplitude traces.
pub fn cmd_run(cfg: &Config) -> Result<Report> {
    cfg.validate()?;
    let instances = load_instances(cfg)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = cfg.hash();
    let seeds: Vec<u64> = instances.iter().map(|(_, i)| i.seed).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let meta = meta_line(&hash, &seeds, &[]);
    let opts = cfg.alt_options();

    let tasks: Vec<(Backend, usize)> = cfg
        .solver
        .backends
        .iter()
        .flat_map(|&b| (0..instances.len()).map(move |i| (b, i)))
        .collect();
    let outcomes: Vec<TrialOutcome> = tasks
        .par_iter()
        .map(|&(backend, idx)| {
            let (name, inst) = &instances[idx];
            let hp = cfg.params_for(backend, inst.nu);
            let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(&[inst.seed, backend_code(backend), idx as u64]));
            let result = (|| {
                let c = coupling_from_observation(&inst.matrix, &inst.y)?;
                let x = inst.x_true.as_ref().map(|x| x.to_vec());
                let truth = match (&x, &inst.xi_true) {
                    (Some(x), Some(xi)) => Some(Truth { x, xi }),
                    _ => None,
                };
                alternating_minimize(&c, backend, &hp, &vec![0.0; inst.n()], truth, &opts, &mut rng)
            })();
            match result {
                Ok(o) => TrialOutcome {
                    backend,
                    name: name.clone(),
                    inst_idx: idx,
                    result: Ok((o.sigma, o.history, o.cg_breakdowns)),
                    traces: o.traces,
                },
                Err(e) => TrialOutcome {
                    backend,
                    name: name.clone(),
                    inst_idx: idx,
                    result: Err(e.to_string()),
                    traces: Vec::new(),
                },
            }
        })
        .collect();

    let mut files = Vec::new();
    let mut summary = CsvFile::create(
        &out.join("summary.csv"),
        &meta,
        "backend,instance,n,a,alpha,nu,seed,status,final_rmse,final_hamming,min_hamiltonian,support,cg_breakdowns,error",
    )?;
    let mut failures = 0;
    for o in &outcomes {
        let inst = &instances[o.inst_idx].1;
        let prefix = format!("{},{},{},{},{},{},{}", o.backend, o.name, inst.n(), inst.sparseness, inst.alpha, inst.nu, inst.seed);
        match &o.result {
            Ok((sigma, hist, breakdowns)) => {
                let last = hist.entries.last();
                let support = sigma.iter().filter(|&&s| s == 1).count();
                summary.line(&format!(
                    "{prefix},ok,{},{},{},{support},{breakdowns},",
                    num(last.and_then(|e| e.rmse)),
                    num(last.and_then(|e| e.hamming)),
                    num(hist.min_hamiltonian()),
                ))?;
            }
            Err(msg) => {
                failures += 1;
                summary.line(&format!("{prefix},failed,,,,,,{}", text(msg)))?;
            }
        }
    }
    files.push(summary.finish()?);

    let mut agg = CsvFile::create(
        &out.join("aggregate.csv"),
        &meta,
        "backend,n,a,alpha,nu,trials,failures,mean_rmse,sd_rmse,mean_hamming,sd_hamming",
    )?;
    let mut groups: Vec<(Backend, usize, f64, f64, f64)> = Vec::new();
    for o in &outcomes {
        let inst = &instances[o.inst_idx].1;
        let key = (o.backend, inst.n(), inst.sparseness, inst.alpha, inst.nu);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for key in groups {
        let members: Vec<&TrialOutcome> = outcomes
            .iter()
            .filter(|o| {
                let i = &instances[o.inst_idx].1;
                (o.backend, i.n(), i.sparseness, i.alpha, i.nu) == key
            })
            .collect();
        let last = |o: &&TrialOutcome| o.result.as_ref().ok().and_then(|(_, h, _)| h.entries.last().cloned());
        let rmse: Vec<f64> = members.iter().filter_map(|o| last(o).and_then(|e| e.rmse)).collect();
        let ham: Vec<f64> = members.iter().filter_map(|o| last(o).and_then(|e| e.hamming)).collect();
        let fails = members.iter().filter(|o| o.result.is_err()).count();
        let (sr, sh) = (stats(&rmse), stats(&ham));
        let (b, n, a, alpha, nu) = key;
        let present = |s: Stats, v: f64| if s.count > 0 { v.to_string() } else { String::new() };
        agg.line(&format!(
            "{b},{n},{a},{alpha},{nu},{},{fails},{},{},{},{}",
            members.len(),
            present(sr, sr.mean),
            present(sr, sr.sd),
            present(sh, sh.mean),
            present(sh, sh.sd)
        ))?;
    }
    files.push(agg.finish()?);

    if cfg.output.history {
        for &b in &cfg.solver.backends {
            let mut h = CsvFile::create(&out.join(format!("history_{b}.csv")), &meta, HISTORY_CSV_HEADER)?;
            for o in outcomes.iter().filter(|o| o.backend == b) {
                if let Ok((_, hist, _)) = &o.result {
                    let (w, path) = h.writer();
                    hist.write_csv_rows(w, &o.name, cfg.output.wall_time).map_err(|e| Error::io(path, e))?;
                }
            }
            files.push(h.finish()?);
        }
    }

    for o in &outcomes {
        for (i, trace) in &o.traces {
            let path = out.join("traces").join(format!("{}_{}_alt{i}.csv", o.backend, o.name));
            let (header, rows) = trace_csv(trace);
            let mut f = CsvFile::create(&path, &meta, header)?;
            let (w, p) = f.writer();
            rows(w).map_err(|e| Error::io(p, e))?;
            files.push(f.finish()?);
        }
    }

    let mut params = serde_json::Map::new();
    for &b in &cfg.solver.backends {
        let mut per_nu = serde_json::Map::new();
        let mut nus: Vec<f64> = instances.iter().map(|(_, i)| i.nu).collect();
        nus.sort_by(f64::total_cmp);
        nus.dedup();
        for nu in nus {
            per_nu.insert(nu.to_string(), serde_json::to_value(cfg.params_for(b, nu)).expect("params serialize"));
        }
        params.insert(b.to_string(), serde_json::Value::Object(per_nu));
    }
    let params_path = out.join("params.json");
    let body = serde_json::to_string_pretty(&serde_json::json!({ "config_sha256": hash, "resolved": params }))
        .expect("params serialize");
    std::fs::write(&params_path, body + "\n").map_err(|e| Error::io(&params_path, e))?;
    files.push(params_path);

    Ok(Report {
        files,
        trials: outcomes.len(),
        failures,
    })
}

type RowWriter<'a> = Box<dyn FnOnce(&mut dyn std::io::Write) -> std::io::Result<()> + 'a>;

fn trace_csv(trace: &CimTrace) -> (&'static str, RowWriter<'_>) {
    match trace {
        CimTrace::MeanField(t) => (
            "step,t,spin_index,c,e",
            Box::new(move |w: &mut dyn std::io::Write| t.write_rows(w)),
        ),
        CimTrace::PositiveP(t) => (
            "step,t,spin_index,mu,mu_tilde,n,m,e",
            Box::new(move |w: &mut dyn std::io::Write| t.write_rows(w)),
        ),
    }
}

/// Re-aggregates whichever result CSVs exist in `dir` into `report.csv` and
/// returns a plain-text table.
pub fn cmd_report(dir: &Path) -> Result<(String, Report)> {
    let mut text_out = String::new();
    let mut files = Vec::new();
    let sources: [(&str, &[&str], &str); 3] = [
        ("summary.csv", &["backend", "n", "a", "alpha", "nu"], "final_rmse"),
        ("mri_rmse.csv", &["method", "eta"], "rmse"),
        ("tau_sweep.csv", &["model", "tau", "a"], "rmse"),
    ];
    let out_path = dir.join("report.csv");
    let mut rows: Vec<String> = Vec::new();
    for (file, keys, value) in sources {
        let path = dir.join(file);
        if !path.is_file() {
            continue;
        }
        let table = aggregate_file(&path, keys, value)?;
        text_out.push_str(&format!("{file}: mean {value} by {}\n", keys.join("/")));
        for (key, s, fails) in &table {
            text_out.push_str(&format!(
                "  {:<40} n={:<3} failures={:<2} mean={:.6} median={:.6} min={:.6} max={:.6}\n",
                key, s.count, fails, s.mean, s.median, s.min, s.max
            ));
            rows.push(format!(
                "{file},{},{},{fails},{},{},{},{}",
                text(key),
                s.count,
                s.mean,
                s.median,
                s.min,
                s.max
            ));
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("no result CSVs found in {}", dir.display())));
    }
    let mut body = String::from("source,group,count,failures,mean,median,min,max\n");
    for r in rows {
        body.push_str(&r);
        body.push('\n');
    }
    std::fs::write(&out_path, body).map_err(|e| Error::io(&out_path, e))?;
    files.push(out_path);
    Ok((
        text_out,
        Report {
            files,
            trials: 0,
            failures: 0,
        },
    ))
}

fn aggregate_file(path: &Path, keys: &[&str], value: &str) -> Result<Vec<(String, Stats, usize)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, format!("missing column {name}")))
    };
    let key_cols = keys.iter().map(|k| col(k)).collect::<Result<Vec<_>>>()?;
    let value_col = col(value)?;
    let status_col = headers.iter().position(|h| h == "status");
    let mut groups: Vec<(String, Vec<f64>, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let key: Vec<&str> = key_cols.iter().map(|&c| rec.get(c).unwrap_or("")).collect();
        let key = key.join("/");
        let idx = match groups.iter().position(|g| g.0 == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new(), 0));
                groups.len() - 1
            }
        };
        let failed = status_col.is_some_and(|c| rec.get(c) == Some("failed"));
        match rec.get(value_col).and_then(|v| v.parse::<f64>().ok()) {
            Some(v) if !failed => groups[idx].1.push(v),
            _ => groups[idx].2 += 1,
        }
    }
    Ok(groups.into_iter().map(|(k, v, f)| (k, stats(&v), f)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> Config {
        let mut c = Config::default();
        c.instance.n = 24;
        c.instance.a = vec![0.1, 0.2];
        c.instance.seeds = 2;
        c.schedule.velo = 4;
        c.solver.n_steps = 200;
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn gen_writes_grid_and_is_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(&dir.path().join("nested/out"));
        let r = cmd_gen(&cfg).unwrap();
        assert_eq!(r.files.len(), 4);
        let first: Vec<Vec<u8>> = r.files.iter().map(|d| std::fs::read(d.join("A.csv")).unwrap()).collect();
        let r2 = cmd_gen(&cfg).unwrap();
        let second: Vec<Vec<u8>> = r2.files.iter().map(|d| std::fs::read(d.join("A.csv")).unwrap()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn run_is_byte_identical_and_reads_bundles() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(&dir.path().join("a"));
        cfg.output.trace_alternations = vec![1];
        cfg.output.trace_samples = Some(5);
        let r = cmd_run(&cfg).unwrap();
        assert_eq!(r.trials, 12);
        assert_eq!(r.failures, 0);
        cfg.output.dir = dir.path().join("b");
        cmd_run(&cfg).unwrap();
        for name in ["summary.csv", "aggregate.csv", "history_mfz-bn.csv", "history_pp.csv"] {
            let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        let summary = std::fs::read_to_string(dir.path().join("a/summary.csv")).unwrap();
        assert!(summary.starts_with(&format!("# config_sha256={}; seeds=0 1", cfg.hash())));
        assert_eq!(summary.lines().count(), 2 + 12);
        let traces = std::fs::read_dir(dir.path().join("a/traces")).unwrap().count();
        assert_eq!(traces, 12);

        // same instances from bundles give the same numbers
        let mut from_disk = tiny(&dir.path().join("c"));
        cmd_gen(&from_disk).unwrap();
        from_disk.instance.dir = Some(dir.path().join("c/instances"));
        from_disk.output.dir = dir.path().join("d");
        cmd_run(&from_disk).unwrap();
        let rows = |p: PathBuf| {
            let mut v: Vec<String> = std::fs::read_to_string(p).unwrap().lines().skip(2).map(str::to_owned).collect();
            v.sort();
            v
        };
        assert_eq!(rows(dir.path().join("a/summary.csv")), rows(dir.path().join("d/summary.csv")));
    }

    #[test]
    fn report_aggregates_summary() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.solver.backends = vec![Backend::MfzBinarized];
        cmd_run(&cfg).unwrap();
        let (table, rep) = cmd_report(dir.path()).unwrap();
        assert!(table.contains("mfz-bn/24/0.1/0.6/0.05"));
        let body = std::fs::read_to_string(&rep.files[0]).unwrap();
        assert_eq!(body.lines().count(), 1 + 2);
        assert!(cmd_report(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn failed_trials_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.solver.backends = vec![Backend::MfzContinuous];
        // a huge step makes the Euler integration blow up
        cfg.solver.dt = 50.0;
        let r = cmd_run(&cfg).unwrap();
        assert_eq!(r.failures, r.trials);
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.lines().skip(2).all(|l| l.contains(",failed,")));
        let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert!(agg.lines().skip(2).all(|l| l.contains(",2,2,")));
    }
}
