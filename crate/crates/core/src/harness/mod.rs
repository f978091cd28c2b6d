//! Experiment orchestration: configuration, sweeps over `(N, R, trial)`,
//! persistence and aggregation.

pub mod eeg;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::GammaReport;
use crate::error::{NicaError, Result};
use crate::gcl::{self, Checkpoint, TrainConfig, DEFAULT_WIDTHS};
use crate::genmodel::{self, make_contrastive_pairs, GenerativeSpec, MvclConfig, TclConfig};
use crate::io;
use crate::metrics::{mi_report, MiEstimator};
use crate::rng::derive_seed;

pub use eeg::{eeg_pipeline, ingest_eeg, synthetic_eeg, write_arff, EegData, EegTable};
pub use report::{aggregate, render_report, AggregateRow, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMode {
    Tcl,
    Mvcl,
    Eeg,
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentMode::Tcl => "tcl",
            ExperimentMode::Mvcl => "mvcl",
            ExperimentMode::Eeg => "eeg",
        })
    }
}

impl std::str::FromStr for ExperimentMode {
    type Err = NicaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tcl" => Ok(ExperimentMode::Tcl),
            "mvcl" => Ok(ExperimentMode::Mvcl),
            "eeg" => Ok(ExperimentMode::Eeg),
            other => Err(NicaError::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub dim: usize,
    pub frames: usize,
    pub sample_sizes: Vec<usize>,
    pub widths: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub mi_estimator: MiEstimator,
    /// Evaluation points for the γ diagnostic; zero disables it.
    pub gamma_points: usize,
    pub gamma_step: f64,
    pub tcl: TclConfig,
    pub mvcl: MvclConfig,
    pub eeg: eeg::EegConfig,
    /// Worker count; `None` uses `NICA_THREADS` or all logical cores.
    pub threads: Option<usize>,
    /// Write per-cell checkpoints, traces and manifests under `output_dir`.
    pub save_artifacts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: ExperimentMode::Tcl,
            dim: 2,
            frames: 5,
            sample_sizes: vec![5000, 10_000],
            widths: DEFAULT_WIDTHS.to_vec(),
            trials: 5,
            base_seed: 0,
            output_dir: PathBuf::from("runs"),
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            mi_estimator: MiEstimator::default(),
            gamma_points: 20,
            gamma_step: 1e-2,
            tcl: TclConfig::default(),
            mvcl: MvclConfig::default(),
            eeg: eeg::EegConfig::default(),
            threads: None,
            save_artifacts: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.trials == 0 {
            return Err(NicaError::invalid("width list must be nonempty and trials >= 1"));
        }
        if self.mode != ExperimentMode::Eeg && self.sample_sizes.is_empty() {
            return Err(NicaError::invalid("sample size list must be nonempty"));
        }
        if self.dim == 0 || self.frames == 0 {
            return Err(NicaError::invalid("dimension and frame count must be positive"));
        }
        self.train.validate()
    }

    pub fn tcl_config(&self) -> TclConfig {
        TclConfig {
            dim: self.dim,
            frames: self.frames,
            ..self.tcl.clone()
        }
    }

    pub fn mvcl_config(&self) -> MvclConfig {
        MvclConfig {
            dim: self.dim,
            ..self.mvcl.clone()
        }
    }

    pub fn generative_spec(&self, seed: u64) -> Result<GenerativeSpec> {
        match self.mode {
            ExperimentMode::Tcl => GenerativeSpec::tcl(&self.tcl_config(), seed),
            ExperimentMode::Mvcl => GenerativeSpec::mvcl(&self.mvcl_config(), seed),
            ExperimentMode::Eeg => Err(NicaError::invalid("EEG mode has no generative spec")),
        }
    }

    /// `(N, R, trial)` cells in sweep order.
    pub fn cells(&self) -> Vec<Cell> {
        let sizes = match self.mode {
            ExperimentMode::Eeg => vec![self.eeg.train_rows],
            _ => self.sample_sizes.clone(),
        };
        let mut out = Vec::new();
        for &n in &sizes {
            for &r in &self.widths {
                for trial in 0..self.trials {
                    out.push(Cell { n, r, trial });
                }
            }
        }
        out
    }

    pub fn trial_seed(&self, cell: Cell) -> u64 {
        derive_seed(
            self.base_seed,
            &[&self.mode.to_string(), &cell.n.to_string(), &cell.r.to_string(), &cell.trial.to_string()],
        )
    }

    /// Seed of the data and generator, shared by every `R` of a trial so widths
    /// are compared on the same draw.
    pub fn data_seed(&self, n: usize, trial: usize) -> u64 {
        derive_seed(self.base_seed, &["data", &self.mode.to_string(), &n.to_string(), &trial.to_string()])
    }

    pub fn spec_seed(&self, trial: usize) -> u64 {
        derive_seed(self.base_seed, &["spec", &self.mode.to_string(), &trial.to_string()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub r: usize,
    pub trial: usize,
}

impl Cell {
    pub fn dir_name(&self, mode: ExperimentMode) -> String {
        format!("{mode}_N{}_R{}_t{}", self.n, self.r, self.trial)
    }
}

/// One line of the results table. Metrics that do not apply to the mode, or
/// that a failed cell never reached, are `None` and written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: ExperimentMode,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub trial: usize,
    pub seed: u64,
    pub mean_mi: Option<f64>,
    pub gamma_mean: Option<f64>,
    pub test_error: Option<f64>,
    pub final_loss: Option<f64>,
    pub wall_ms: u64,
    /// `ok`, or `error: <message>`.
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellArtifacts {
    pub cell: Cell,
    pub dir: PathBuf,
    /// File name → SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub results_csv: PathBuf,
    pub results_sha256: String,
    /// External inputs (e.g. the EEG file) → SHA-256.
    pub input_hashes: BTreeMap<String, String>,
    pub cells: Vec<CellArtifacts>,
    pub started_unix_s: u64,
    pub wall_ms: u64,
}

impl RunManifest {
    /// Paths referenced by the manifest that are missing on disk.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        let mut missing = Vec::new();
        if !self.results_csv.exists() {
            missing.push(self.results_csv.clone());
        }
        for c in &self.cells {
            for name in c.files.keys() {
                let p = c.dir.join(name);
                if !p.exists() {
                    missing.push(p);
                }
            }
        }
        missing
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub manifest: RunManifest,
}

impl SweepOutcome {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(ResultRow::is_ok)
    }
}

/// Worker count: explicit setting, else `NICA_THREADS`, else all cores.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("NICA_THREADS").ok().and_then(|v| v.parse().ok()))
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

struct CellResult {
    mean_mi: Option<f64>,
    gamma_mean: Option<f64>,
    test_error: Option<f64>,
    final_loss: f64,
    files: BTreeMap<String, String>,
}

/// Runs every cell of the sweep; failing cells become status rows and never
/// abort the others. Writes `results.csv` and `manifest.json` to the output
/// directory.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let started_unix_s = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let t0 = Instant::now();
    std::fs::create_dir_all(&config.output_dir)?;

    let mut input_hashes = BTreeMap::new();
    let eeg_data = if config.mode == ExperimentMode::Eeg {
        let data = eeg::load_for_config(&config.eeg, config.base_seed)?;
        if let Some(path) = &config.eeg.path {
            input_hashes.insert(path.display().to_string(), io::sha256_file(path)?);
        }
        Some(data)
    } else {
        None
    };

    let cells = config.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(config.threads))
        .build()
        .map_err(|e| NicaError::invalid(format!("thread pool: {e}")))?;
    let results: Vec<(Cell, u64, Result<CellResult>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| {
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| match &eeg_data {
                    Some(data) => run_eeg_cell(config, data, cell),
                    None => run_synthetic_cell(config, cell),
                }))
                .unwrap_or_else(|panic| {
                    let msg = panic
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "unknown panic".into());
                    Err(NicaError::invalid(format!("cell panicked: {msg}")))
                });
                (cell, start.elapsed().as_millis() as u64, outcome)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut artifacts = Vec::new();
    for (cell, wall_ms, outcome) in results {
        let mut row = ResultRow {
            mode: config.mode,
            n: cell.n,
            r: cell.r,
            trial: cell.trial,
            seed: config.trial_seed(cell),
            mean_mi: None,
            gamma_mean: None,
            test_error: None,
            final_loss: None,
            wall_ms,
            status: "ok".into(),
        };
        match outcome {
            Ok(res) => {
                row.mean_mi = res.mean_mi;
                row.gamma_mean = res.gamma_mean;
                row.test_error = res.test_error;
                row.final_loss = Some(res.final_loss);
                if !res.files.is_empty() {
                    artifacts.push(CellArtifacts {
                        cell,
                        dir: config.output_dir.join("cells").join(cell.dir_name(config.mode)),
                        files: res.files,
                    });
                }
            }
            Err(e) => row.status = format!("error: {e}"),
        }
        rows.push(row);
    }

    let results_csv = config.output_dir.join("results.csv");
    write_results_csv(&results_csv, &rows)?;
    let manifest = RunManifest {
        config: config.clone(),
        results_sha256: io::sha256_file(&results_csv)?,
        results_csv,
        input_hashes,
        cells: artifacts,
        started_unix_s,
        wall_ms: t0.elapsed().as_millis() as u64,
    };
    io::write_json(&config.output_dir.join("manifest.json"), &manifest)?;
    Ok(SweepOutcome { rows, manifest })
}

fn save_cell_artifacts(
    config: &ExperimentConfig,
    cell: Cell,
    checkpoint: &Checkpoint,
    trace: &[gcl::EpochRecord],
    extra: impl FnOnce(&Path) -> Result<Vec<String>>,
) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    if !config.save_artifacts {
        return Ok(files);
    }
    let dir = config.output_dir.join("cells").join(cell.dir_name(config.mode));
    std::fs::create_dir_all(&dir)?;
    io::write_json(&dir.join("checkpoint.json"), checkpoint)?;
    io::write_trace_csv(&dir.join("trace.csv"), trace)?;
    let mut names = vec!["checkpoint.json".to_string(), "trace.csv".to_string()];
    names.extend(extra(&dir)?);
    for name in names {
        files.insert(name.clone(), io::sha256_file(&dir.join(&name))?);
    }
    Ok(files)
}

/// generate → train → eval → diagnose for one synthetic cell.
fn run_synthetic_cell(config: &ExperimentConfig, cell: Cell) -> Result<CellResult> {
    let spec_seed = config.spec_seed(cell.trial);
    let spec = config.generative_spec(spec_seed)?;
    let data_seed = config.data_seed(cell.n, cell.trial);
    let positives = genmodel::sample(&spec, cell.n, data_seed)?;
    let pair_seed = derive_seed(data_seed, &["pairs"]);
    let pairs = make_contrastive_pairs(&positives, pair_seed)?;

    let train_cfg = TrainConfig {
        width: cell.r,
        seed: config.trial_seed(cell),
        ..config.train.clone()
    };
    let model = train_cfg.init_model(spec.dim, spec.aux_dim())?;
    let outcome = gcl::train(model, &pairs, None, &train_cfg)?;
    let model = &outcome.model;

    let sources = positives.s.as_ref().expect("synthetic batches carry sources");
    let y = model.extract_features(positives.x.view())?;
    let mi = mi_report(y.view(), sources.view(), config.mi_estimator, derive_seed(data_seed, &["mi"]))?;

    let gamma = if config.gamma_points > 0 && spec.dim > 1 {
        let stride = (cell.n / config.gamma_points).max(1);
        let idx: Vec<usize> = (0..cell.n).step_by(stride).take(config.gamma_points).collect();
        let pts = sources.select(ndarray::Axis(0), &idx);
        let c = |s0: ArrayView1<f64>| -> Array1<f64> {
            let x = spec.mixing.mix(s0);
            model.h.forward(x.view()).expect("dimension checked at init")
        };
        Some(GammaReport::evaluate(c, pts.view(), config.gamma_step)?)
    } else {
        None
    };

    let checkpoint = Checkpoint::new(model, train_cfg.seed, outcome.steps);
    let manifest = io::DatasetManifest {
        spec: spec.clone(),
        n: cell.n,
        data_seed,
        spec_seed,
        pair_seed: Some(pair_seed),
    };
    let files = save_cell_artifacts(config, cell, &checkpoint, &outcome.trace, |dir| {
        io::write_json(&dir.join("dataset.json"), &manifest)?;
        io::write_json(&dir.join("mi.json"), &mi)?;
        let mut names = vec!["dataset.json".to_string(), "mi.json".to_string()];
        if let Some(g) = &gamma {
            write_gamma_csv(&dir.join("gamma.csv"), g)?;
            names.push("gamma.csv".into());
        }
        Ok(names)
    })?;

    Ok(CellResult {
        mean_mi: Some(mi.mean_mi),
        gamma_mean: gamma.map(|g| g.gamma_mean).filter(|v| v.is_finite()),
        test_error: None,
        final_loss: outcome.final_loss,
        files,
    })
}

fn run_eeg_cell(config: &ExperimentConfig, data: &EegData, cell: Cell) -> Result<CellResult> {
    let seed = config.trial_seed(cell);
    let res = eeg::run_trial(data, &config.train, config.eeg.feature_dim, cell.r, seed)?;
    let checkpoint = Checkpoint::new(&res.model, seed, res.steps);
    let files = save_cell_artifacts(config, cell, &checkpoint, &res.trace, |_| Ok(Vec::new()))?;
    Ok(CellResult {
        mean_mi: None,
        gamma_mean: None,
        test_error: Some(res.test_error),
        final_loss: res.final_loss,
        files,
    })
}

/// Rows `point_index,j,k,gamma_norm`.
pub fn write_gamma_csv(path: &Path, report: &GammaReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["point_index", "j", "k", "gamma_norm"])?;
    for (p, j, k, v) in report.csv_rows() {
        w.write_record([p.to_string(), j.to_string(), k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Drops the `wall_ms` column so two sweeps can be compared byte for byte.
pub fn strip_timing(csv_text: &str) -> Result<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let mut w = csv::Writer::from_writer(Vec::new());
    let headers = r.headers()?.clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| &headers[i] != "wall_ms").collect();
    w.write_record(keep.iter().map(|&i| &headers[i]))?;
    for rec in r.records() {
        let rec = rec?;
        w.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    let bytes = w.into_inner().map_err(|e| NicaError::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            sample_sizes: vec![500],
            widths: vec![8],
            trials: 1,
            output_dir: dir.to_path_buf(),
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            gamma_points: 3,
            threads: Some(1),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_cell_gives_one_row_and_complete_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&tiny_config(dir.path())).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.all_ok(), "{:?}", out.rows);
        let row = &out.rows[0];
        assert!(row.mean_mi.is_some() && row.final_loss.is_some() && row.test_error.is_none());
        assert!(out.manifest.missing_files().is_empty());
        assert_eq!(out.manifest.cells[0].files.len(), 5);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_sweep(&tiny_config(a.path())).unwrap();
        run_sweep(&tiny_config(b.path())).unwrap();
        let read = |d: &Path| strip_timing(&std::fs::read_to_string(d.join("results.csv")).unwrap()).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        let ck = |d: &Path| std::fs::read(d.join("cells/tcl_N500_R8_t0/checkpoint.json")).unwrap();
        assert_eq!(ck(a.path()), ck(b.path()));
    }

    #[test]
    fn failing_cell_becomes_status_row() {
        let dir = tempfile::tempdir().unwrap();
        // 503 is not a multiple of the frame count
        let cfg = ExperimentConfig {
            sample_sizes: vec![500, 503],
            ..tiny_config(dir.path())
        };
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].is_ok());
        assert!(out.rows[1].status.starts_with("error:"));
        assert!(out.rows[1].mean_mi.is_none());
        let back = read_results_csv(&dir.path().join("results.csv")).unwrap();
        assert_eq!(back, out.rows);
    }

    #[test]
    fn default_sweep_cardinality_and_seeds() {
        let cfg = ExperimentConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 2 * 8 * 5);
        let seeds: std::collections::BTreeSet<u64> = cells.iter().map(|&c| cfg.trial_seed(c)).collect();
        assert_eq!(seeds.len(), cells.len());
    }

    #[test]
    fn toml_round_trip() {
        let text = "mode = \"mvcl\"\nsample_sizes = [1000]\ntrials = 2\n[train]\nepochs = 3\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.mode, ExperimentMode::Mvcl);
        assert_eq!(cfg.sample_sizes, vec![1000]);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 256);
        assert!(ExperimentConfig::from_toml_str("trials = 0").is_err());
    }
}
