//! The `pfb` command line.
//!
//! Exit codes: 0 success, 1 bad flags or unusable input, 2 training
//! divergence, 3 failed check suite.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pfbound::bound_full::BuildOptions;
use pfbound::optimizers::{minimize_batch, theory_constants, Schedule};
use pfbound::train::{train, train_observed, Clock, Method, MetricsTrace, NoClock, TrainConfig};
use pfbound::{linear_model, FeatureMap, LabeledDataset};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{run_all, CheckOptions, SpectrumForm, SuiteSizes};
use crate::data_io::{
    self, fingerprint, load_csv, load_svmlight, split_and_scale, synth_logreg, Categorical, Scale,
    SynthSpec,
};
use crate::metrics::{manifest_path, metrics_csv, DataInfo, RunConfig, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pfb",
    version,
    about = "Quadratic partition-function bound optimizers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write a metrics CSV plus manifest.
    Train(TrainArgs),
    /// Run several methods over a seed set and tabulate epochs to threshold.
    Compare(CompareArgs),
    /// Run the randomized property suites.
    Check(CheckArgs),
    /// Report the convergence constants of a dataset.
    Constants(ConstantsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pfb,
    Spfb,
    Lspfb,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum ScheduleArg {
    InvT,
    Constant,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::InvT => Schedule::InvT,
            ScheduleArg::Constant => Schedule::Constant,
        }
    }
}

fn schedule_name(s: Schedule) -> &'static str {
    match s {
        Schedule::InvT => "inv_t",
        Schedule::Constant => "constant",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Svmlight,
    Csv,
    Synth,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// File path, or `synth:{d:5,n:3,T:1000,...}`.
    #[arg(long)]
    pub data: String,
    /// Defaults to `synth` for `synth:` sources, `csv` for `.csv` files,
    /// `svmlight` otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    #[arg(long, value_enum, default_value_t = Scale::None)]
    pub scale: Scale,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// 0-based label column for CSV input (default: last).
    #[arg(long)]
    pub label_col: Option<usize>,
    #[arg(long, value_enum, default_value_t = Categorical::Integer)]
    pub categorical: Categorical,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub eta0: f64,
    #[arg(long)]
    pub lambda: f64,
    /// Required for `lspfb`.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::InvT)]
    pub schedule: ScheduleArg,
    /// Training samples between evaluations (default: the batch size).
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Record wall-clock step times (makes the CSV nondeterministic).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Method specs such as `sgd`, `spfb:eta0=8`, `lspfb:k=10,schedule=constant`.
    /// Specs without `eta0` are tuned over `--eta0-grid` and both schedules.
    #[arg(long, value_delimiter = ' ', num_args = 1.., required = true)]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Number of seeds; runs use seeds `seed_base .. seed_base + seeds`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1,3,10,30,100")]
    pub eta0_grid: Vec<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Summary CSV; the full tuning grid goes to `<out>.grid.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Instances per suite (default: the full acceptance sizes).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SpectrumForm::Norm)]
    pub spectrum_form: SpectrumForm,
    /// Directory for counterexample files.
    #[arg(long, default_value = "pfb-check")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Inject::None, hide = true)]
    pub inject: Inject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Inject {
    None,
    /// Negate every curvature weight in the full bound.
    BetaSign,
}

#[derive(Debug, Clone, Args)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: f64,
    /// Step scale at which to evaluate `Q` (default: twice the minimum).
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Constants(a) => cmd_constants(&a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

type CmdResult = Result<i32, String>;

pub struct LoadedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub info: DataInfo,
}

fn csv_width(path: &Path) -> Result<usize, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = text.lines().next().ok_or("empty CSV file")?;
    Ok(header.split(',').count())
}

pub fn load_data(a: &DataArgs) -> Result<LoadedData, String> {
    let format = a.format.unwrap_or_else(|| {
        if a.data.starts_with("synth:") {
            Format::Synth
        } else if a.data.ends_with(".csv") {
            Format::Csv
        } else {
            Format::Svmlight
        }
    });
    let err = |e: data_io::DataError| e.to_string();
    let mut dropped_rows = 0;
    let full = match format {
        Format::Synth => {
            let text = a.data.strip_prefix("synth:").unwrap_or(&a.data);
            synth_logreg(&SynthSpec::parse(text).map_err(err)?)
                .map_err(err)?
                .0
        }
        Format::Svmlight => load_svmlight(Path::new(&a.data)).map_err(err)?,
        Format::Csv => {
            let path = Path::new(&a.data);
            let label_col = match a.label_col {
                Some(c) => c,
                None => csv_width(path)?.saturating_sub(1),
            };
            let (data, report) = load_csv(path, label_col, a.categorical).map_err(err)?;
            dropped_rows = report.dropped_rows;
            data
        }
    };
    let (train, test, _) =
        split_and_scale(&full, a.test_frac, a.split_seed, a.scale).map_err(err)?;
    let info = DataInfo {
        source: a.data.clone(),
        fingerprint: fingerprint(&full),
        n_train: train.len(),
        n_test: test.len(),
        input_dim: full.input_dim(),
        n_classes: full.n_classes(),
        scale: format!("{:?}", a.scale),
        test_frac: a.test_frac,
        dropped_rows,
    };
    Ok(LoadedData { train, test, info })
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ms(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

fn method_from(arg: MethodArg, rank: Option<usize>) -> Result<Method, String> {
    Ok(match arg {
        MethodArg::Pfb => Method::Pfb,
        MethodArg::Spfb => Method::Spfb,
        MethodArg::Sgd => Method::Sgd,
        MethodArg::Lspfb => Method::Lspfb {
            rank: rank.ok_or("--rank is required for lspfb")?,
        },
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_train(a: &TrainArgs) -> CmdResult {
    let method = method_from(a.method, a.rank)?;
    let data = load_data(&a.data)?;
    let map = FeatureMap::block_one_hot(data.info.n_classes, data.info.input_dim);
    let mut cfg = TrainConfig::new(method, a.eta0, a.lambda, a.batch_size, a.epochs, a.seed);
    cfg.schedule = a.schedule.into();
    cfg.eval_every = a.eval_every.unwrap_or(a.batch_size);

    let started = SystemTime::now();
    let wall = Instant::now();
    let trace = if a.timing {
        train(
            &cfg,
            &data.train,
            &data.test,
            &map,
            &mut WallClock(Instant::now()),
        )
    } else {
        train(&cfg, &data.train, &data.test, &map, &mut NoClock)
    }
    .map_err(|e| e.to_string())?;

    write_file(&a.out, &metrics_csv(&trace.records))?;
    let mut manifest = RunManifest::new(run_config(&cfg), data.info, &trace);
    manifest.timing_enabled = a.timing;
    manifest.started_at_unix_ms = started
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_millis());
    manifest.wall_ms = Some(wall.elapsed().as_secs_f64() * 1e3);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    write_file(&manifest_path(&a.out), &(json + "\n"))?;

    if let Some(d) = &trace.diverged {
        eprintln!("diverged at step {}: {}", d.step, d.reason);
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

fn run_config(cfg: &TrainConfig) -> RunConfig {
    RunConfig {
        method: cfg.method.name().to_string(),
        rank: match cfg.method {
            Method::Lspfb { rank } => Some(rank),
            _ => None,
        },
        eta0: cfg.eta0,
        lambda: cfg.lambda,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        schedule: schedule_name(cfg.schedule).to_string(),
        eval_every: cfg.eval_every,
    }
}

/// One entry of `--methods`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub method: Method,
    pub eta0: Option<f64>,
    pub schedule: Option<Schedule>,
}

impl MethodSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let (name, opts) = text.split_once(':').unwrap_or((text, ""));
        let mut rank = None;
        let mut eta0 = None;
        let mut schedule = None;
        for kv in opts.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or(format!("bad option `{kv}` in `{text}`"))?;
            let bad = || format!("bad value `{v}` for `{k}`");
            match k {
                "k" | "rank" => rank = Some(v.parse::<usize>().map_err(|_| bad())?),
                "eta0" => eta0 = Some(v.parse::<f64>().map_err(|_| bad())?),
                "schedule" => {
                    schedule = Some(match v {
                        "inv_t" => Schedule::InvT,
                        "constant" => Schedule::Constant,
                        _ => return Err(format!("unknown schedule `{v}`")),
                    })
                }
                _ => return Err(format!("unknown option `{k}` in `{text}`")),
            }
        }
        let arg = MethodArg::from_str(name, true)?;
        let method = method_from(arg, rank)?;
        let label = match method {
            Method::Lspfb { rank } => format!("lspfb(k={rank})"),
            m => m.name().to_string(),
        };
        Ok(Self {
            label,
            method,
            eta0,
            schedule,
        })
    }

    fn candidates(&self, grid: &[f64]) -> Vec<(f64, Schedule)> {
        let etas = self.eta0.map_or_else(|| grid.to_vec(), |e| vec![e]);
        let schedules = self
            .schedule
            .map_or_else(|| vec![Schedule::InvT, Schedule::Constant], |s| vec![s]);
        etas.iter()
            .flat_map(|&e| schedules.iter().map(move |&s| (e, s)))
            .collect()
    }
}

/// First recorded epoch at which the training objective is at or below
/// `threshold`.
pub fn epochs_to_threshold(trace: &MetricsTrace, threshold: f64) -> Option<f64> {
    trace
        .records
        .iter()
        .find(|r| r.train_loss <= threshold)
        .map(|r| r.epoch)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigSummary {
    pub method: String,
    pub eta0: f64,
    pub schedule: &'static str,
    pub seeds: usize,
    pub reached: usize,
    pub diverged: usize,
    /// Infinite unless every seed reached the threshold.
    pub epochs_mean: f64,
    pub epochs_sd: f64,
    pub final_loss_mean: f64,
    pub final_loss_sd: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Orders configurations for tuning: more seeds reaching the threshold,
/// then fewer mean epochs, then lower mean final loss.
fn better(a: &ConfigSummary, b: &ConfigSummary) -> bool {
    use std::cmp::Ordering::Less;
    b.reached
        .cmp(&a.reached)
        .then(a.epochs_mean.total_cmp(&b.epochs_mean))
        .then(a.final_loss_mean.total_cmp(&b.final_loss_mean))
        == Less
}

/// Epochs to threshold, final loss, diverged.
type RunOutcome = (Option<f64>, f64, bool);

pub struct CompareResult {
    pub l_star: f64,
    pub threshold: f64,
    pub best: Vec<ConfigSummary>,
    pub grid: Vec<ConfigSummary>,
}

/// Runs every `(spec, eta0, schedule, seed)` combination in parallel and
/// keeps the best configuration of each spec.
pub fn compare(
    specs: &[MethodSpec],
    data: &LoadedData,
    a: &CompareArgs,
) -> Result<CompareResult, String> {
    let map = FeatureMap::block_one_hot(data.info.n_classes, data.info.input_dim);
    let (_, l_star, gnorm, _) =
        minimize_batch(&data.train, a.lambda, &map, 1e-10, 10_000).map_err(|e| e.to_string())?;
    if gnorm > 1e-10 {
        eprintln!("warning: reference optimum stopped at gradient norm {gnorm:.3e}");
    }
    let threshold = (1.0 + a.epsilon) * l_star;

    let mut jobs = Vec::new();
    for (si, spec) in specs.iter().enumerate() {
        for (ci, (eta0, schedule)) in spec.candidates(&a.eta0_grid).into_iter().enumerate() {
            for seed in a.seed_base..a.seed_base + a.seeds {
                jobs.push((si, ci, eta0, schedule, seed));
            }
        }
    }
    let outcomes: Vec<Result<RunOutcome, String>> = jobs
        .par_iter()
        .map(|&(si, _, eta0, schedule, seed)| {
            let mut cfg = TrainConfig::new(
                specs[si].method,
                eta0,
                a.lambda,
                a.batch_size,
                a.epochs,
                seed,
            );
            cfg.schedule = schedule;
            cfg.eval_every = a.eval_every.unwrap_or(a.batch_size);
            let trace = train(&cfg, &data.train, &data.test, &map, &mut NoClock)
                .map_err(|e| e.to_string())?;
            let final_loss = if trace.diverged.is_some() {
                f64::INFINITY
            } else {
                trace.records.last().map_or(f64::NAN, |r| r.train_loss)
            };
            Ok((
                epochs_to_threshold(&trace, threshold),
                final_loss,
                trace.diverged.is_some(),
            ))
        })
        .collect();

    let mut grid = Vec::new();
    let mut best: Vec<Option<ConfigSummary>> = vec![None; specs.len()];
    let mut i = 0;
    while i < jobs.len() {
        let (si, ci, eta0, schedule, _) = jobs[i];
        let mut epochs = Vec::new();
        let mut finals = Vec::new();
        let (mut reached, mut diverged) = (0, 0);
        while i < jobs.len() && jobs[i].0 == si && jobs[i].1 == ci {
            let (e, f, d) = outcomes[i].clone()?;
            reached += e.is_some() as usize;
            diverged += d as usize;
            epochs.push(e.unwrap_or(f64::INFINITY));
            finals.push(f);
            i += 1;
        }
        let (epochs_mean, epochs_sd) = mean_sd(&epochs);
        let (final_loss_mean, final_loss_sd) = mean_sd(&finals);
        let summary = ConfigSummary {
            method: specs[si].label.clone(),
            eta0,
            schedule: schedule_name(schedule),
            seeds: epochs.len(),
            reached,
            diverged,
            epochs_mean,
            epochs_sd,
            final_loss_mean,
            final_loss_sd,
        };
        if best[si].as_ref().is_none_or(|b| better(&summary, b)) {
            best[si] = Some(summary.clone());
        }
        grid.push(summary);
    }
    Ok(CompareResult {
        l_star,
        threshold,
        best: best.into_iter().flatten().collect(),
        grid,
    })
}

const SUMMARY_HEADER: &str =
    "method,eta0,schedule,seeds,reached,diverged,epochs_mean,epochs_sd,final_loss_mean,final_loss_sd,l_star,threshold";

pub fn summary_csv(rows: &[ConfigSummary], l_star: f64, threshold: f64) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.eta0,
            r.schedule,
            r.seeds,
            r.reached,
            r.diverged,
            r.epochs_mean,
            r.epochs_sd,
            r.final_loss_mean,
            r.final_loss_sd,
            l_star,
            threshold
        ));
    }
    out
}

fn cmd_compare(a: &CompareArgs) -> CmdResult {
    let specs = a
        .methods
        .iter()
        .map(|s| MethodSpec::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    if a.seeds == 0 || a.batch_size == 0 || !(a.epsilon > 0.0) {
        return Err("--seeds, --batch-size and --epsilon must be positive".into());
    }
    let data = load_data(&a.data)?;
    let result = compare(&specs, &data, a)?;
    write_file(
        &a.out,
        &summary_csv(&result.best, result.l_star, result.threshold),
    )?;
    let mut grid_path = a.out.as_os_str().to_owned();
    grid_path.push(".grid.csv");
    write_file(
        Path::new(&grid_path),
        &summary_csv(&result.grid, result.l_star, result.threshold),
    )?;
    let manifest = serde_json::json!({
        "schema_version": crate::metrics::MANIFEST_SCHEMA,
        "columns": SUMMARY_HEADER.split(',').collect::<Vec<_>>(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "methods": a.methods,
        "lambda": a.lambda,
        "batch_size": a.batch_size,
        "epochs": a.epochs,
        "seeds": (a.seed_base..a.seed_base + a.seeds).collect::<Vec<_>>(),
        "epsilon": a.epsilon,
        "eta0_grid": a.eta0_grid,
        "data": data.info,
    });
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    write_file(&manifest_path(&a.out), &(json + "\n"))?;

    println!("L* = {}  threshold = {}", result.l_star, result.threshold);
    println!(
        "{:<14} {:>9} {:>9} {:>8} {:>16} {:>22}",
        "method", "eta0", "schedule", "reached", "epochs", "final loss"
    );
    for r in &result.best {
        println!(
            "{:<14} {:>9} {:>9} {:>5}/{:<2} {:>8.3} ± {:<5.3} {:>12.6} ± {:.1e}",
            r.method,
            r.eta0,
            r.schedule,
            r.reached,
            r.seeds,
            r.epochs_mean,
            r.epochs_sd,
            r.final_loss_mean,
            r.final_loss_sd
        );
    }
    Ok(EXIT_OK)
}

fn cmd_check(a: &CheckArgs) -> CmdResult {
    let opts = CheckOptions {
        sizes: a
            .trials
            .map_or_else(SuiteSizes::default, SuiteSizes::uniform),
        seed: a.seed,
        build: BuildOptions {
            negate_beta: a.inject == Inject::BetaSign,
        },
        spectrum_form: a.spectrum_form,
    };
    let outcomes = run_all(&opts);
    for o in &outcomes {
        println!("{}", o.line());
    }
    let Some(failed) = outcomes.iter().find(|o| !o.passed) else {
        return Ok(EXIT_OK);
    };
    fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    let path = a.out.join(format!("repro-{}.json", failed.name));
    let body = serde_json::json!({
        "suite": failed.name,
        "seed": a.seed,
        "detail": failed.detail,
        "counterexample": failed.counterexample,
    });
    let json = serde_json::to_string_pretty(&body).map_err(|e| e.to_string())?;
    write_file(&path, &(json + "\n"))?;
    eprintln!(
        "first failing suite: {} (repro written to {})",
        failed.name,
        path.display()
    );
    Ok(EXIT_CHECK_FAILED)
}

#[derive(Debug, Serialize)]
struct ConstantsReport {
    n_classes: usize,
    max_sq_norm: f64,
    mu1: f64,
    mu2: f64,
    lambda1: f64,
    lambda2: f64,
    sigma_sq: f64,
    eta0_min: f64,
    eta0: f64,
    l_star: f64,
    initial_gap: f64,
    q: f64,
}

fn cmd_constants(a: &ConstantsArgs) -> CmdResult {
    let data = load_data(&a.data)?;
    let train_set = &data.train;
    let n = data.info.n_classes;
    if n < 2 {
        return Err(format!("need at least two classes, found {n}"));
    }
    if !(a.lambda > 0.0) {
        return Err("--lambda must be positive (strong convexity is lambda)".into());
    }
    let map = FeatureMap::block_one_hot(n, data.info.input_dim);
    let base =
        theory_constants(train_set, &map, a.lambda, 0.0, 1.0, 0.0).map_err(|e| e.to_string())?;
    let eta0 = a.eta0.unwrap_or(2.0 * base.eta0_min);

    // Gradient second moment along the first epoch of a single-sample run.
    let mut cfg = TrainConfig::new(Method::Spfb, eta0, a.lambda, 1, 1, a.seed);
    cfg.eval_steps = Some(Vec::new());
    let mut sigma_sq = 0.0f64;
    let mut grad_err = None;
    train_observed(
        &cfg,
        train_set,
        &data.test,
        &map,
        &mut NoClock,
        &mut |_, theta, rows| {
            let i = rows[0];
            match linear_model::sample_gradient(
                theta,
                train_set.x(i),
                train_set.label(i),
                a.lambda,
                &map,
            ) {
                Ok(g) => sigma_sq = sigma_sq.max(g.iter().map(|v| v * v).sum()),
                Err(e) => grad_err = Some(e.to_string()),
            }
        },
    )
    .map_err(|e| e.to_string())?;
    if let Some(e) = grad_err {
        return Err(e);
    }
    let (_, l_star, _, _) =
        minimize_batch(train_set, a.lambda, &map, 1e-10, 10_000).map_err(|e| e.to_string())?;
    let l0 = linear_model::mean_nll(&vec![0.0; map.dim()], train_set, &map);
    let c = theory_constants(train_set, &map, a.lambda, sigma_sq, eta0, l0 - l_star)
        .map_err(|e| e.to_string())?;
    let report = ConstantsReport {
        n_classes: n,
        max_sq_norm: c.max_sq_norm,
        mu1: c.mu1,
        mu2: c.mu2,
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        sigma_sq: c.sigma_sq,
        eta0_min: c.eta0_min,
        eta0: c.eta0,
        l_star,
        initial_gap: c.initial_gap,
        q: c.q,
    };
    let mut stdout = std::io::stdout().lock();
    if a.json {
        let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        writeln!(stdout, "{json}").map_err(|e| e.to_string())?;
    } else {
        let lines = [
            ("max_sq_norm", report.max_sq_norm),
            ("mu1", report.mu1),
            ("mu2", report.mu2),
            ("lambda1", report.lambda1),
            ("lambda2", report.lambda2),
            ("sigma_sq", report.sigma_sq),
            ("eta0_min", report.eta0_min),
            ("eta0", report.eta0),
            ("l_star", report.l_star),
            ("initial_gap", report.initial_gap),
            ("q", report.q),
        ];
        writeln!(stdout, "{:<12} {}", "n_classes", report.n_classes).map_err(|e| e.to_string())?;
        for (k, v) in lines {
            writeln!(stdout, "{k:<12} {v}").map_err(|e| e.to_string())?;
        }
    }
    Ok(EXIT_OK)
}
