//! EEG eye-state experiment: ingestion, a same-shape synthetic stand-in, and
//! the feature-learning → logistic-regression pipeline.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NicaError, Result};
use crate::gcl::{self, EpochRecord, GclModel, TrainConfig};
use crate::genmodel::{make_contrastive_pairs, SampleBatch};
use crate::metrics::{fit_linear_classifier, majority_baseline_error, ClassifierConfig};
use crate::nn::{gaussian_matrix, Activation};
use crate::rng::{self, derive_seed};

pub const CHANNELS: usize = 14;
/// Rows of the reference layout: 12,000 training rows and 3,000 test rows.
pub const REFERENCE_ROWS: usize = 15_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EegConfig {
    /// ARFF or CSV recording; `None` uses the synthetic stand-in.
    pub path: Option<PathBuf>,
    pub feature_dim: usize,
    pub frames: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub synthetic_rows: usize,
}

impl Default for EegConfig {
    fn default() -> Self {
        EegConfig {
            path: None,
            feature_dim: 5,
            frames: 60,
            train_rows: 12_000,
            test_rows: 3_000,
            synthetic_rows: REFERENCE_ROWS,
        }
    }
}

/// Raw recording: one row per time step, in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct EegTable {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct EegData {
    /// Standardized training rows, `u` = one-hot frame index, all labels `+1`.
    pub train: SampleBatch,
    pub train_labels: Vec<u8>,
    pub test_x: Array2<f64>,
    pub test_labels: Vec<u8>,
    pub frames: usize,
    pub frame_len: usize,
    pub synthetic: bool,
    pub warning: Option<String>,
}

fn ingest_error(path: &Path, reason: impl Into<String>) -> NicaError {
    NicaError::Ingest {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses an ARFF (`@data` section) or CSV file of 14 feature columns plus a
/// binary label column.
pub fn read_eeg_table(path: &Path) -> Result<EegTable> {
    let text = fs::read_to_string(path).map_err(|e| ingest_error(path, e.to_string()))?;
    let is_arff = text
        .lines()
        .any(|l| l.trim_start().to_ascii_lowercase().starts_with("@data"));
    let mut in_data = !is_arff;
    let mut attributes = 0usize;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@attribute") {
                attributes += 1;
            } else if lower.starts_with("@data") {
                if attributes != CHANNELS + 1 {
                    return Err(ingest_error(
                        path,
                        format!("expected {CHANNELS} feature attributes plus a label, found {attributes} attributes"),
                    ));
                }
                in_data = true;
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != CHANNELS + 1 {
            return Err(ingest_error(
                path,
                format!(
                    "line {}: expected {CHANNELS} feature columns plus a label, found {} columns",
                    lineno + 1,
                    cols.len()
                ),
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        let parsed = match parsed {
            Ok(v) => v,
            // a CSV header line
            Err(_) if !is_arff && values.is_empty() => continue,
            Err(e) => return Err(ingest_error(path, format!("line {}: {e}", lineno + 1))),
        };
        let label = parsed[CHANNELS];
        if label != 0.0 && label != 1.0 {
            return Err(ingest_error(path, format!("line {}: label must be 0 or 1, got {label}", lineno + 1)));
        }
        values.extend_from_slice(&parsed[..CHANNELS]);
        labels.push(label as u8);
    }
    if labels.is_empty() {
        return Err(ingest_error(path, "no data rows"));
    }
    let features = Array2::from_shape_vec((labels.len(), CHANNELS), values).expect("row-major fill");
    Ok(EegTable { features, labels })
}

pub fn write_arff(path: &Path, table: &EegTable) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "@relation eeg_eye_state")?;
    for c in 0..table.features.ncols() {
        writeln!(out, "@attribute ch{} numeric", c + 1)?;
    }
    writeln!(out, "@attribute eyeDetection {{0,1}}")?;
    writeln!(out, "@data")?;
    for (row, &label) in table.features.outer_iter().zip(&table.labels) {
        for v in row {
            write!(out, "{v},")?;
        }
        writeln!(out, "{label}")?;
    }
    out.flush()?;
    Ok(())
}

/// Splits a chronological recording: the first `train_rows` rows form
/// `frames` contiguous frames, the next rows (at most `test_rows`) the test
/// set. Recordings shorter than `train_rows + test_rows` are split in the same
/// proportion, with a warning. Features are standardized with training
/// statistics.
pub fn prepare(table: &EegTable, cfg: &EegConfig) -> Result<EegData> {
    let rows = table.labels.len();
    let wanted = cfg.train_rows + cfg.test_rows;
    if cfg.frames == 0 || cfg.train_rows < cfg.frames {
        return Err(NicaError::invalid("need at least one row per frame"));
    }
    let (train_budget, test_budget, warning) = if rows >= wanted {
        (cfg.train_rows, cfg.test_rows, None)
    } else {
        let train = rows * cfg.train_rows / wanted;
        (
            train,
            rows - train,
            Some(format!("recording has {rows} rows (< {wanted}); using a proportional split")),
        )
    };
    let frame_len = train_budget / cfg.frames;
    if frame_len == 0 {
        return Err(NicaError::invalid(format!("{rows} rows are too few for {} frames", cfg.frames)));
    }
    let n_train = frame_len * cfg.frames;
    let n_test = test_budget.min(rows - n_train);
    if n_test == 0 {
        return Err(NicaError::invalid("no rows left for the test set"));
    }

    let train_raw = table.features.slice(ndarray::s![..n_train, ..]);
    let mean = train_raw.mean_axis(Axis(0)).expect("nonempty");
    let std: Array1<f64> = train_raw.var_axis(Axis(0), 0.0).mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let standardize = |a: ndarray::ArrayView2<f64>| (&a - &mean) / &std;
    let x = standardize(train_raw);
    let test_x = standardize(table.features.slice(ndarray::s![n_train..n_train + n_test, ..]));

    let mut u = Array2::zeros((n_train, cfg.frames));
    for row in 0..n_train {
        u[[row, row / frame_len]] = 1.0;
    }
    Ok(EegData {
        train: SampleBatch::new(x, u, vec![1; n_train], None)?,
        train_labels: table.labels[..n_train].to_vec(),
        test_x,
        test_labels: table.labels[n_train..n_train + n_test].to_vec(),
        frames: cfg.frames,
        frame_len,
        synthetic: false,
        warning,
    })
}

/// Reads and prepares a recording with the default layout.
pub fn ingest_eeg(path: &Path) -> Result<EegData> {
    ingest_eeg_with(path, &EegConfig::default())
}

pub fn ingest_eeg_with(path: &Path, cfg: &EegConfig) -> Result<EegData> {
    let table = read_eeg_table(path)?;
    prepare(&table, cfg)
}

/// Same-shape stand-in for the eye-state recording: five nonstationary latent
/// signals, two of which shift with a piecewise-constant binary state, mixed
/// nonlinearly into 14 channels with heterogeneous offsets and gains.
pub fn synthetic_eeg(rows: usize, seed: u64) -> EegTable {
    const LATENT: usize = 5;
    const BLOCK: usize = 200;
    let mut r = rng::seeded(seed);

    let mut labels = Vec::with_capacity(rows);
    let mut state = 0u8;
    while labels.len() < rows {
        let run = r.gen_range(300..1500);
        labels.extend(std::iter::repeat_n(state, run.min(rows - labels.len())));
        state ^= 1;
    }

    let mut s = Array2::zeros((rows, LATENT));
    let mut block_mean = [0.0; LATENT];
    let mut block_scale = [1.0; LATENT];
    for t in 0..rows {
        if t % BLOCK == 0 {
            for i in 0..LATENT {
                block_mean[i] = r.gen_range(-1.0..1.0);
                block_scale[i] = r.gen_range(0.3..1.5);
            }
        }
        for i in 0..LATENT {
            let shift = if i < 2 { 1.2 * f64::from(labels[t]) } else { 0.0 };
            s[[t, i]] = block_mean[i] + shift + block_scale[i] * rng::gaussian(&mut r) * rng::laplace(&mut r);
        }
    }

    let first = gaussian_matrix(CHANNELS, LATENT, &mut r);
    let second = gaussian_matrix(CHANNELS, CHANNELS, &mut r);
    let leaky = Activation::LeakyRelu { slope: 0.2 };
    let offsets: Vec<f64> = (0..CHANNELS).map(|_| r.gen_range(4000.0..4700.0)).collect();
    let gains: Vec<f64> = (0..CHANNELS).map(|_| 10f64.powf(r.gen_range(0.0..2.0))).collect();
    let hidden = s.dot(&first.t()).mapv(|v| leaky.apply(v));
    let mut features = hidden.dot(&second.t());
    for (c, mut col) in features.axis_iter_mut(Axis(1)).enumerate() {
        for v in col.iter_mut() {
            *v = offsets[c] + gains[c] * (*v + 0.05 * rng::gaussian(&mut r));
        }
    }
    EegTable { features, labels }
}

/// The configured recording, or the synthetic stand-in when no path is set.
pub fn load_for_config(cfg: &EegConfig, seed: u64) -> Result<EegData> {
    match &cfg.path {
        Some(path) => ingest_eeg_with(path, cfg),
        None => {
            let table = synthetic_eeg(cfg.synthetic_rows, derive_seed(seed, &["synthetic-eeg"]));
            let mut data = prepare(&table, cfg)?;
            data.synthetic = true;
            Ok(data)
        }
    }
}

#[derive(Debug, Clone)]
pub struct EegTrial {
    pub model: GclModel,
    pub trace: Vec<EpochRecord>,
    pub final_loss: f64,
    pub steps: u64,
    pub test_error: f64,
    pub baseline_error: f64,
}

/// Trains `h: ℝ^14 → ℝ^feature_dim` on the framed training rows, fits a
/// logistic regression on the training features, and scores the test rows.
pub fn run_trial(data: &EegData, train: &TrainConfig, feature_dim: usize, width: usize, seed: u64) -> Result<EegTrial> {
    let pairs = make_contrastive_pairs(&data.train, derive_seed(seed, &["pairs"]))?;
    let cfg = TrainConfig {
        width,
        seed,
        feature_dim: Some(feature_dim),
        ..train.clone()
    };
    let model = cfg.init_model(data.train.dim(), data.train.aux_dim())?;
    let outcome = gcl::train(model, &pairs, None, &cfg)?;
    let train_feat = outcome.model.extract_features(data.train.x.view())?;
    let test_feat = outcome.model.extract_features(data.test_x.view())?;
    let clf = fit_linear_classifier(train_feat.view(), &data.train_labels, &ClassifierConfig::default())?;
    Ok(EegTrial {
        test_error: clf.error_rate(test_feat.view(), &data.test_labels)?,
        baseline_error: majority_baseline_error(&data.test_labels),
        model: outcome.model,
        trace: outcome.trace,
        final_loss: outcome.final_loss,
        steps: outcome.steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegRow {
    #[serde(rename = "R")]
    pub r: usize,
    pub trial: usize,
    pub seed: u64,
    pub test_error: f64,
    pub baseline_error: f64,
}

/// One row per `(R, trial)`.
pub fn eeg_pipeline(
    data: &EegData,
    train: &TrainConfig,
    feature_dim: usize,
    widths: &[usize],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<EegRow>> {
    let cells: Vec<(usize, usize)> = widths.iter().flat_map(|&r| (0..trials).map(move |t| (r, t))).collect();
    cells
        .par_iter()
        .map(|&(r, trial)| {
            let seed = derive_seed(base_seed, &["eeg", &r.to_string(), &trial.to_string()]);
            let res = run_trial(data, train, feature_dim, r, seed)?;
            Ok(EegRow {
                r,
                trial,
                seed,
                test_error: res.test_error,
                baseline_error: res.baseline_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_layout_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eeg.arff");
        write_arff(&path, &synthetic_eeg(REFERENCE_ROWS, 1)).unwrap();
        let data = ingest_eeg(&path).unwrap();
        assert_eq!(data.train.len(), 12_000);
        assert_eq!(data.test_x.nrows(), 3_000);
        assert_eq!(data.frames, 60);
        assert_eq!(data.frame_len, 200);
        assert!(data.warning.is_none());
        assert_eq!(data.train.u.row(199)[0], 1.0);
        assert_eq!(data.train.u.row(200)[1], 1.0);
    }

    #[test]
    fn standardized_with_training_statistics() {
        let data = prepare(&synthetic_eeg(REFERENCE_ROWS, 2), &EegConfig::default()).unwrap();
        for col in data.train.x.axis_iter(Axis(1)) {
            assert!(col.mean().unwrap().abs() < 1e-12);
            assert!((col.var(0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn short_recording_splits_proportionally() {
        let data = prepare(&synthetic_eeg(14_980, 3), &EegConfig::default()).unwrap();
        assert!(data.warning.is_some());
        assert_eq!(data.train.len() % 60, 0);
        assert!(data.train.len() <= 11_984);
        assert!(data.test_x.nrows() <= 3_000 && data.test_x.nrows() > 2_900);
    }

    #[test]
    fn wrong_column_count_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("narrow.csv");
        fs::write(&path, "a,b,c\n1,2,0\n").unwrap();
        let err = read_eeg_table(&path).unwrap_err().to_string();
        assert!(err.contains("narrow.csv"), "{err}");
        assert!(err.contains("14"), "{err}");
    }

    #[test]
    fn csv_with_header_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eeg.csv");
        let mut text = (1..=14).map(|i| format!("c{i}")).collect::<Vec<_>>().join(",") + ",label\n";
        for k in 0..3 {
            text += &((0..14).map(|i| (i + k).to_string()).collect::<Vec<_>>().join(","));
            text += &format!(",{}\n", k % 2);
        }
        fs::write(&path, text).unwrap();
        let t = read_eeg_table(&path).unwrap();
        assert_eq!(t.features.dim(), (3, 14));
        assert_eq!(t.labels, vec![0, 1, 0]);
    }
}
