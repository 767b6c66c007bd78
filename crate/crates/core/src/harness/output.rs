use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A CSV file whose first line records the config hash and seed list.
pub(crate) struct CsvFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvFile {
    pub(crate) fn create(path: &Path, meta: &str, header: &str) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut f = CsvFile {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        f.line(&format!("# {meta}"))?;
        f.line(header)?;
        Ok(f)
    }

    pub(crate) fn line(&mut self, row: &str) -> Result<()> {
        writeln!(self.out, "{row}").map_err(|e| Error::io(&self.path, e))
    }

    pub(crate) fn writer(&mut self) -> (&mut BufWriter<File>, &Path) {
        (&mut self.out, &self.path)
    }

    pub(crate) fn finish(mut self) -> Result<PathBuf> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

pub(crate) fn meta_line(hash: &str, seeds: &[u64], extra: &[(&str, String)]) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let mut s = format!("config_sha256={hash}; seeds={}", seeds.join(" "));
    for (k, v) in extra {
        s.push_str(&format!("; {k}={v}"));
    }
    s
}

/// Empty string for missing values, shortest round-trip form otherwise.
pub(crate) fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV-safe free text.
pub(crate) fn text(s: &str) -> String {
    let flat = s.replace(['\n', '\r'], " ");
    if flat.contains([',', '"']) {
        format!("\"{}\"", flat.replace('"', "\"\""))
    } else {
        flat
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub(crate) fn stats(values: &[f64]) -> Stats {
    let n = values.len();
    if n == 0 {
        return Stats::default();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Stats {
        count: n,
        mean,
        sd,
        min: sorted[0],
        median,
        max: sorted[n - 1],
    }
}

/// Mixes seed components into one 64-bit seed (SplitMix64 finalizer).
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
