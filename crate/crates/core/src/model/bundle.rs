//! On-disk instance bundle: `A.csv` (row-major, one matrix row per line),
//! `y.csv` (one value per line), optional `truth.csv` (`x,xi` header) and a
//! `meta.json` sidecar.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ProblemInstance;
use crate::error::{Error, Result};

/// Name of the generator stream the instance seeds refer to.
pub const GENERATOR: &str = "rand_chacha::ChaCha20Rng/0.9";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub a: f64,
    pub alpha: f64,
    pub nu: f64,
    pub seed: u64,
    #[serde(default)]
    pub generator: Option<String>,
}

impl InstanceMeta {
    pub fn of(inst: &ProblemInstance) -> Self {
        InstanceMeta {
            n: inst.n(),
            m: inst.m(),
            a: inst.sparseness,
            alpha: inst.alpha,
            nu: inst.nu,
            seed: inst.seed,
            generator: Some(GENERATOR.to_string()),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(path, e)
}

pub fn write_bundle(dir: &Path, inst: &ProblemInstance) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("A.csv");
    let mut w = csv_writer(&path)?;
    for row in inst.matrix.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("y.csv");
    let mut w = csv_writer(&path)?;
    for v in &inst.y {
        w.write_record([v.to_string()]).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    if let (Some(x), Some(xi)) = (&inst.x_true, &inst.xi_true) {
        let path = dir.join("truth.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["x", "xi"]).map_err(csv_err(&path))?;
        for (v, s) in x.iter().zip(xi) {
            w.write_record([v.to_string(), s.to_string()]).map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let path = dir.join("meta.json");
    let meta = serde_json::to_string_pretty(&InstanceMeta::of(inst)).expect("meta serializes");
    fs::write(&path, meta + "\n").map_err(|e| Error::io(&path, e))
}

fn read_rows(path: &Path, has_headers: bool) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .from_path(path)
        .map_err(csv_err(path))?;
    rdr.records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(csv_err(path))
        })
        .collect()
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("not a number: {s:?}")))
}

pub fn read_bundle(dir: &Path) -> Result<ProblemInstance> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: InstanceMeta = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;

    let path = dir.join("A.csv");
    let rows = read_rows(&path, false)?;
    if rows.len() != meta.m || rows.iter().any(|r| r.len() != meta.n) {
        return Err(Error::parse(&path, format!("expected {}x{} values", meta.m, meta.n)));
    }
    let mut data = Vec::with_capacity(meta.m * meta.n);
    for row in &rows {
        for v in row {
            data.push(parse_f64(&path, v)?);
        }
    }
    let matrix = Array2::from_shape_vec((meta.m, meta.n), data).expect("shape checked");

    let path = dir.join("y.csv");
    let y = read_rows(&path, false)?
        .iter()
        .map(|r| parse_f64(&path, r.first().map(String::as_str).unwrap_or("")))
        .collect::<Result<Array1<f64>>>()?;

    let path = dir.join("truth.csv");
    let (x_true, xi_true) = if path.exists() {
        let rows = read_rows(&path, true)?;
        let mut x = Vec::with_capacity(rows.len());
        let mut xi = Vec::with_capacity(rows.len());
        for r in &rows {
            if r.len() != 2 {
                return Err(Error::parse(&path, "expected columns x,xi"));
            }
            x.push(parse_f64(&path, &r[0])?);
            xi.push(
                r[1].trim()
                    .parse::<u8>()
                    .map_err(|_| Error::parse(&path, format!("bad support flag {:?}", r[1])))?,
            );
        }
        (Some(Array1::from(x)), Some(xi))
    } else {
        (None, None)
    };

    let inst = ProblemInstance {
        matrix,
        y,
        x_true,
        xi_true,
        sparseness: meta.a,
        alpha: meta.alpha,
        nu: meta.nu,
        seed: meta.seed,
    };
    inst.validate()?;
    Ok(inst)
}
