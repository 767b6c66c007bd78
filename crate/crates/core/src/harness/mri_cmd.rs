use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::output::{meta_line, mix_seed, stats, text, CsvFile};
use crate::harness::{backend_code, Config, Report};
use crate::mri::{build_problem, masked_signal, phantom, prepare_target, GrayImage, MriProblem, MriSetup};
use crate::orchestrator::Backend;

struct Row {
    method: String,
    eta: f64,
    mask: u64,
    trial: usize,
    result: std::result::Result<(f64, usize, Vec<f64>), String>,
}

fn setup(cfg: &Config) -> MriSetup {
    MriSetup {
        size: cfg.mri.size,
        sparseness: cfg.mri.sparseness,
        compression: cfg.mri.compression,
        gamma: cfg.mri.gamma,
    }
}

pub(crate) fn load_image(cfg: &Config) -> Result<GrayImage> {
    match &cfg.mri.image {
        Some(p) => GrayImage::read(p),
        None => phantom(4 * cfg.mri.size, 4 * cfg.mri.size),
    }
}

/// Resize → sparsify → mask → LASSO warm start → alternating minimization
/// for every `(mask, η, back-end, trial)`; writes `mri_rmse.csv` (one row per
/// reconstruction), `mri_summary.csv`, the masks and reconstructed images.
pub fn cmd_mri(cfg: &Config) -> Result<Report> {
    cfg.validate()?;
    let m = &cfg.mri;
    let setup = setup(cfg);
    let target = prepare_target(&load_image(cfg)?, &setup)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mask_seeds: Vec<u64> = (0..m.masks as u64).map(|s| cfg.instance.seed_base + s).collect();
    let meta = meta_line(&cfg.hash(), &mask_seeds, &[("compression", setup.compression.to_string())]);

    let problems: Vec<(u64, MriProblem)> = mask_seeds
        .par_iter()
        .map(|&s| Ok((s, build_problem(&target, &setup, s)?)))
        .collect::<Result<_>>()?;
    let inits: Vec<Vec<f64>> = problems
        .par_iter()
        .map(|(_, p)| p.lasso(m.lasso_init))
        .collect::<Result<_>>()?;

    let mut tasks: Vec<(usize, Option<Backend>, f64, usize)> = Vec::new();
    for pi in 0..problems.len() {
        for &lam in &m.lasso_lambdas {
            tasks.push((pi, None, lam, 0));
        }
        for &b in &cfg.solver.backends {
            for &eta in &m.etas {
                for trial in 0..m.trials {
                    tasks.push((pi, Some(b), eta, trial));
                }
            }
        }
    }
    let rows: Vec<Row> = tasks
        .par_iter()
        .map(|&(pi, backend, eta, trial)| {
            let (seed, prob) = &problems[pi];
            let result = match backend {
                None => prob.lasso(eta).and_then(|theta| {
                    let k = theta.iter().filter(|v| **v != 0.0).count();
                    Ok((prob.rmse(&theta)?, k, theta))
                }),
                Some(b) => {
                    let hp = cfg.mri_params_for(b, eta);
                    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(&[*seed, backend_code(b), eta.to_bits(), trial as u64]));
                    prob.reconstruct(b, &hp, &inits[pi], &mut rng).and_then(|o| {
                        let theta = masked_signal(&o);
                        let k = o.sigma.iter().filter(|&&s| s == 1).count();
                        Ok((prob.rmse(&theta)?, k, theta))
                    })
                }
            };
            Row {
                method: backend.map_or_else(|| "lasso".to_string(), |b| b.to_string()),
                eta,
                mask: *seed,
                trial,
                result: result.map_err(|e| e.to_string()),
            }
        })
        .collect();

    let mut files = Vec::new();
    let mut f = CsvFile::create(&out.join("mri_rmse.csv"), &meta, "method,eta,mask,trial,status,rmse,support,error")?;
    for r in &rows {
        match &r.result {
            Ok((rmse, k, _)) => f.line(&format!("{},{},{},{},ok,{rmse},{k},", r.method, r.eta, r.mask, r.trial))?,
            Err(e) => f.line(&format!("{},{},{},{},failed,,,{}", r.method, r.eta, r.mask, r.trial, text(e)))?,
        }
    }
    files.push(f.finish()?);

    let mut s = CsvFile::create(
        &out.join("mri_summary.csv"),
        &meta,
        "method,eta,runs,failures,mean_rmse,median_rmse,min_rmse,max_rmse",
    )?;
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in &rows {
        if !keys.iter().any(|k| k.0 == r.method && k.1 == r.eta) {
            keys.push((r.method.clone(), r.eta));
        }
    }
    for (method, eta) in &keys {
        let group: Vec<&Row> = rows.iter().filter(|r| &r.method == method && r.eta == *eta).collect();
        let vals: Vec<f64> = group.iter().filter_map(|r| r.result.as_ref().ok().map(|v| v.0)).collect();
        let fails = group.len() - vals.len();
        let st = stats(&vals);
        if st.count > 0 {
            s.line(&format!("{method},{eta},{},{fails},{},{},{},{}", group.len(), st.mean, st.median, st.min, st.max))?;
        } else {
            s.line(&format!("{method},{eta},{},{fails},,,,", group.len()))?;
        }
    }
    files.push(s.finish()?);

    for (seed, prob) in &problems {
        let p = out.join("masks").join(format!("mask_{seed}.csv"));
        std::fs::create_dir_all(p.parent().expect("has parent")).map_err(|e| Error::io(&p, e))?;
        prob.ops.mask().write_csv(&p)?;
        files.push(p);
    }

    if cfg.output.images {
        let img_dir = out.join("images");
        std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        let p = img_dir.join("target.pgm");
        target.write(&p)?;
        files.push(p);
        let (first_seed, first) = &problems[0];
        for r in rows.iter().filter(|r| r.mask == *first_seed && r.trial == 0) {
            if let Ok((_, _, theta)) = &r.result {
                let p = img_dir.join(format!("{}_eta{}_mask{}.pgm", r.method, r.eta, r.mask));
                first.ops.synthesize(theta)?.write(&p)?;
                files.push(p);
            }
        }
    }

    let failures = rows.iter().filter(|r| r.result.is_err()).count();
    Ok(Report {
        files,
        trials: rows.len(),
        failures,
    })
}
