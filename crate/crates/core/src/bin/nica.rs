use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, ArrayView1, Axis};

use nica::diagnostics::{BoundInputs, BoundReport, GammaReport};
use nica::gcl::{self, Checkpoint, TrainConfig};
use nica::genmodel::{self, make_contrastive_pairs, GenerativeSpec, SampleBatch};
use nica::harness::{self, aggregate, render_report, ExperimentConfig, ExperimentMode};
use nica::io::{self, DatasetManifest};
use nica::metrics::{mi_report, MiEstimator};
use nica::rng::derive_seed;
use nica::{NicaError, Result};

#[derive(Parser)]
#[command(name = "nica", version, about = "Nonlinear ICA by generalized contrastive learning")]
struct Cli {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset and write contrastive pairs plus a manifest.
    Gen(GenArgs),
    /// Train a GCL model on a dataset CSV.
    Train(TrainArgs),
    /// Matched mutual information between learned features and true sources.
    Eval(EvalArgs),
    /// γ diagnostic of a trained model against the ground-truth mixing.
    Diagnose(DiagnoseArgs),
    /// Evaluate the finite-sample bound calculators.
    Bound(BoundArgs),
    /// Run a full (N, R, trial) sweep.
    Sweep(SweepArgs),
    /// Aggregate a results CSV into an SVG chart and markdown summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    mode: Option<ExperimentMode>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for `data.csv` and `manifest.json`.
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "checkpoint.json")]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset CSV with `s_*` columns; only `d = +1` rows are used.
    #[arg(long)]
    data: PathBuf,
    /// `ksg` or `histogram`.
    #[arg(long, default_value = "ksg")]
    estimator: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    /// Output prefix: writes `<prefix>.json` and `<prefix>.csv`.
    #[arg(long, default_value = "gamma")]
    out: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    c_x: Option<f64>,
    #[arg(long)]
    c_u: Option<f64>,
    /// Comma-separated layer norm bounds B_i.
    #[arg(long, value_delimiter = ',')]
    layer_norms: Option<Vec<f64>>,
    /// Take B_i (and L) from a trained checkpoint instead.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    c_t: Option<f64>,
    #[arg(long)]
    sigma_star: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    mode: Option<ExperimentMode>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// EEG recording (ARFF or CSV); without it EEG mode uses the synthetic stand-in.
    #[arg(long)]
    eeg: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    /// Output directory for `report.svg`, `report.md` and `aggregate.csv`.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_toml_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn positives(batch: &SampleBatch) -> SampleBatch {
    let rows: Vec<usize> = (0..batch.len()).filter(|&i| batch.d[i] == 1).collect();
    batch.select(&rows)
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn gen(cfg: ExperimentConfig, args: GenArgs) -> Result<()> {
    let mut cfg = cfg;
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(d) = args.dim {
        cfg.dim = d;
    }
    if let Some(t) = args.frames {
        cfg.frames = t;
    }
    let seed = args.seed.unwrap_or(cfg.base_seed);
    let spec_seed = derive_seed(seed, &["spec"]);
    let data_seed = derive_seed(seed, &["data"]);
    let pair_seed = derive_seed(seed, &["pairs"]);
    let spec = cfg.generative_spec(spec_seed)?;
    let batch = make_contrastive_pairs(&genmodel::sample(&spec, args.n, data_seed)?, pair_seed)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_dataset_csv(&args.out.join("data.csv"), &batch)?;
    io::write_json(
        &args.out.join("manifest.json"),
        &DatasetManifest {
            spec,
            n: args.n,
            data_seed,
            spec_seed,
            pair_seed: Some(pair_seed),
        },
    )?;
    eprintln!("wrote {} rows to {}", batch.len(), args.out.display());
    Ok(())
}

fn train(cfg: ExperimentConfig, args: TrainArgs) -> Result<()> {
    let batch = io::read_dataset_csv(&args.data)?;
    let mut tc: TrainConfig = cfg.train;
    tc.width = args.width.unwrap_or(tc.width);
    tc.epochs = args.epochs.unwrap_or(tc.epochs);
    tc.batch_size = args.batch_size.unwrap_or(tc.batch_size);
    tc.learning_rate = args.learning_rate.unwrap_or(tc.learning_rate);
    tc.seed = args.seed.unwrap_or(tc.seed);
    let model = tc.init_model(batch.dim(), batch.aux_dim())?;
    let outcome = gcl::train(model, &batch, None, &tc)?;
    io::write_json(&args.out, &Checkpoint::new(&outcome.model, tc.seed, outcome.steps))?;
    if let Some(t) = &args.trace {
        io::write_trace_csv(t, &outcome.trace)?;
    }
    eprintln!(
        "loss {:.6} -> {:.6} after {} steps",
        outcome.initial_loss, outcome.final_loss, outcome.steps
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<gcl::GclModel> {
    io::read_json::<Checkpoint>(path)?.into_model()
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let batch = positives(&io::read_dataset_csv(&args.data)?);
    let s = batch
        .s
        .as_ref()
        .ok_or_else(|| NicaError::invalid("dataset has no s_* columns"))?;
    let estimator = match args.estimator.as_str() {
        "ksg" => MiEstimator::Ksg { k: args.k },
        "histogram" => MiEstimator::HistogramKde { bins: 32 },
        other => return Err(NicaError::invalid(format!("unknown estimator {other:?}"))),
    };
    let y = model.extract_features(batch.x.view())?;
    let rep = mi_report(y.view(), s.view(), estimator, args.seed)?;
    emit_json(&rep, args.out.as_deref())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let manifest: DatasetManifest = io::read_json(&args.manifest)?;
    let spec: GenerativeSpec = manifest.spec;
    let batch = positives(&io::read_dataset_csv(&args.data)?);
    let s = batch
        .s
        .as_ref()
        .ok_or_else(|| NicaError::invalid("dataset has no s_* columns"))?;
    let stride = (s.nrows() / args.points.max(1)).max(1);
    let idx: Vec<usize> = (0..s.nrows()).step_by(stride).take(args.points).collect();
    let pts = s.select(Axis(0), &idx);
    let c = |s0: ArrayView1<f64>| -> Array1<f64> {
        let x = spec.mixing.mix(s0);
        model.h.forward(x.view()).expect("checkpoint matches data dimension")
    };
    let rep = GammaReport::evaluate(c, pts.view(), args.step)?;
    io::write_json(&args.out.with_extension("json"), &rep)?;
    harness::write_gamma_csv(&args.out.with_extension("csv"), &rep)?;
    eprintln!(
        "gamma_mean {:.6e}, mean permutation score {:.6e}, {} skipped",
        rep.gamma_mean,
        rep.mean_permutation_score,
        rep.skipped.len()
    );
    Ok(())
}

fn bound(args: BoundArgs) -> Result<()> {
    let mut inputs = BoundInputs::default();
    if let Some(p) = &args.checkpoint {
        let model = load_model(p)?;
        inputs.layer_norms = model.layer_norm_bounds();
        inputs.num_layers = inputs.layer_norms.len();
        inputs.dim = model.feature_dim();
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),*) => { $(if let Some(v) = $arg { inputs.$field = v; })* };
    }
    set!(c_x <- args.c_x, c_u <- args.c_u, layer_norms <- args.layer_norms, dim <- args.dim,
         num_layers <- args.layers, n <- args.n, delta <- args.delta, nu <- args.nu,
         c_t <- args.c_t, sigma_star <- args.sigma_star);
    emit_json(&BoundReport::compute(&inputs)?, args.out.as_deref())
}

fn sweep(cfg: ExperimentConfig, args: SweepArgs) -> Result<bool> {
    let mut cfg = cfg;
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(n) = args.n {
        cfg.sample_sizes = n;
    }
    if let Some(w) = args.widths {
        cfg.widths = w;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if args.eeg.is_some() {
        cfg.eeg.path = args.eeg;
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    let out = harness::run_sweep(&cfg)?;
    let failed = out.rows.iter().filter(|r| !r.is_ok()).count();
    eprintln!(
        "{} cells, {} failed; results in {}",
        out.rows.len(),
        failed,
        out.manifest.results_csv.display()
    );
    let agg = aggregate(&out.rows);
    if !agg.is_empty() {
        let rep = render_report(&agg)?;
        std::fs::write(cfg.output_dir.join("report.svg"), rep.svg)?;
        std::fs::write(cfg.output_dir.join("report.md"), rep.markdown)?;
    }
    Ok(failed == 0)
}

fn report(args: ReportArgs) -> Result<()> {
    let rows = harness::read_results_csv(&args.results)?;
    let agg = aggregate(&rows);
    let rep = render_report(&agg)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.svg"), &rep.svg)?;
    std::fs::write(args.out.join("report.md"), &rep.markdown)?;
    let mut w = csv::Writer::from_path(args.out.join("aggregate.csv"))?;
    for row in &agg {
        w.serialize(row)?;
    }
    w.flush()?;
    print!("{}", rep.markdown);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = || load_config(cli.config.as_deref());
    match cli.command {
        Command::Gen(a) => gen(cfg()?, a).map(|_| true),
        Command::Train(a) => train(cfg()?, a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Diagnose(a) => diagnose(a).map(|_| true),
        Command::Bound(a) => bound(a).map(|_| true),
        Command::Sweep(a) => sweep(cfg()?, a),
        Command::Report(a) => report(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
