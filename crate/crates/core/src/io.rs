//! On-disk formats: dataset CSV, JSON manifests and checkpoints, loss traces.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back bit-exactly.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NicaError, Result};
use crate::gcl::EpochRecord;
use crate::genmodel::{GenerativeSpec, SampleBatch};

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: GenerativeSpec,
    pub n: usize,
    pub data_seed: u64,
    pub spec_seed: u64,
    /// Seed of the derangement used for negative pairs, when pairs were built.
    pub pair_seed: Option<u64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// Header `s_1..s_D` (when sources are known), `x_1..x_D`, `u_1..u_Du`, `d`.
pub fn write_dataset_csv(path: &Path, batch: &SampleBatch) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let d = batch.dim();
    let du = batch.aux_dim();
    let mut header = Vec::new();
    if let Some(s) = &batch.s {
        header.extend((1..=s.ncols()).map(|i| format!("s_{i}")));
    }
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=du).map(|i| format!("u_{i}")));
    header.push("d".into());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for row in 0..batch.len() {
        rec.clear();
        if let Some(s) = &batch.s {
            rec.extend(s.row(row).iter().map(f64::to_string));
        }
        rec.extend(batch.x.row(row).iter().map(f64::to_string));
        rec.extend(batch.u.row(row).iter().map(f64::to_string));
        rec.push(batch.d[row].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<SampleBatch> {
    let ingest = |reason: String| NicaError::Ingest {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (ns, nx, nu) = (count("s_"), count("x_"), count("u_"));
    if nx == 0 || header.last().map(String::as_str) != Some("d") || ns + nx + nu + 1 != header.len() {
        return Err(ingest(format!("unexpected header {header:?}")));
    }
    let (mut s, mut x, mut u, mut d) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ingest(format!("row {}: {e}", line + 2)))?;
        s.extend_from_slice(&vals[..ns]);
        x.extend_from_slice(&vals[ns..ns + nx]);
        u.extend_from_slice(&vals[ns + nx..ns + nx + nu]);
        let label = vals[ns + nx + nu];
        if label != 1.0 && label != -1.0 {
            return Err(ingest(format!("row {}: label must be ±1, got {label}", line + 2)));
        }
        d.push(label as i8);
    }
    let n = d.len();
    let shape = |cols: usize, v: Vec<f64>| Array2::from_shape_vec((n, cols), v).expect("row-major fill");
    let s = (ns > 0).then(|| shape(ns, s));
    SampleBatch::new(shape(nx, x), shape(nu, u), d, s)
}

pub fn write_trace_csv(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "holdout_loss"])?;
    for rec in trace {
        w.write_record([
            rec.epoch.to_string(),
            rec.train_loss.to_string(),
            rec.holdout_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
