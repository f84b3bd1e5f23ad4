//! Command-line front end for the `batchei` library.

pub mod io;
pub mod manifest;
pub mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use batchei::bench::experiment::{run_experiment, ExperimentConfig};
use batchei::bench::report::{results_csv, summarize, Summary};
use batchei::bench::timing::{fd_gradient, timing_csv, timing_sweep};
use batchei::mvn::{CdfAccuracy, CdfCallCounter};
use batchei::qei::{qei_grad, qei_value_counted};
use clap::{Args, Parser, Subcommand};

use crate::io::{load_batch, load_model, parse_json, write_atomic};
use crate::manifest::{config_hash, timestamp, RunManifest};

/// Exit status 1: bad usage or unreadable input. Exit status 2: the
/// numerical routines rejected the input or a check failed.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Math(batchei::Error),
    /// A completed check that did not pass; `report` goes to stdout.
    CheckFailed { report: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Math(_) | CliError::CheckFailed { .. } => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::CheckFailed { message: m, .. } => f.write_str(m),
            CliError::Math(e) => write!(f, "{e}"),
        }
    }
}

impl From<batchei::Error> for CliError {
    fn from(e: batchei::Error) -> Self {
        CliError::Math(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "batchei", version, about = "Multipoint expected improvement: evaluation, gradients and benchmarks")]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for benchmark replicates.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Absolute tolerance of multivariate normal CDF evaluations.
    #[arg(long = "cdf-tol", global = true)]
    pub cdf_tol: Option<f64>,
    /// Directory receiving output files.
    #[arg(long = "output-dir", global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the qEI of a batch and the CDF calls it took.
    Eval(EvalArgs),
    /// Compare the analytic gradient with central differences.
    Gradcheck(GradcheckArgs),
    /// Run a regret experiment.
    Bench(BenchArgs),
    /// Draw the regret curves of a summary file.
    Plot(PlotArgs),
    /// Time analytic against finite-difference gradients.
    Timing(TimingArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub batch: PathBuf,
    /// Improvement threshold; defaults to the best observed response.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub input: EvalArgs,
    #[arg(long = "fd-step", default_value_t = 1e-5)]
    pub fd_step: f64,
    /// Largest accepted error per coordinate: relative, or absolute when the
    /// finite difference is below 1e-9.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON experiment configuration; omitted fields take desk-scale defaults.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named configuration: `desk` or `paper-scale`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Write 0 in the wall_ms column so reruns compare byte for byte.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub summary: PathBuf,
    /// Output SVG; defaults to `regret.svg` in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long = "d", value_delimiter = ',', required = true)]
    pub ds: Vec<usize>,
    #[arg(long = "q", value_delimiter = ',', required = true)]
    pub qs: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

const DEFAULT_EVAL_TOL: f64 = 1e-8;
const DEFAULT_TIMING_TOL: f64 = 1e-6;

/// Runs a parsed command, returning what it prints on success.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    if let Some(t) = cli.cdf_tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage("--cdf-tol must be positive".into()));
        }
    }
    let seed = cli.seed.unwrap_or(0);
    let acc = |default: f64| CdfAccuracy {
        seed,
        ..CdfAccuracy::with_tolerance(cli.cdf_tol.unwrap_or(default))
    };
    match &cli.command {
        Command::Eval(a) => eval(a, &acc(DEFAULT_EVAL_TOL)),
        Command::Gradcheck(a) => gradcheck(a, &acc(DEFAULT_EVAL_TOL)),
        Command::Bench(a) => with_threads(cli.threads, || bench(a, cli)),
        Command::Plot(a) => plot(a, &cli.output_dir),
        Command::Timing(a) => timing(a, seed, &acc(DEFAULT_TIMING_TOL), &cli.output_dir),
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// `v` with 12 significant digits.
pub fn significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..12).contains(&exp) {
        format!("{:.*}", (11 - exp).max(0) as usize, v)
    } else {
        format!("{v:.11e}")
    }
}

fn threshold_for(args: &EvalArgs, model: &batchei::gp::PosteriorGP) -> Result<f64, CliError> {
    match args.threshold.or_else(|| model.best_response()) {
        Some(t) if t.is_finite() => Ok(t),
        Some(_) => Err(CliError::Usage("threshold must be finite".into())),
        None => Err(CliError::Usage("--threshold is required for a model without observations".into())),
    }
}

fn eval(args: &EvalArgs, acc: &CdfAccuracy) -> Result<String, CliError> {
    let loaded = load_model(&args.model)?;
    let batch = load_batch(&args.batch, &loaded.domain)?;
    let t = threshold_for(args, &loaded.model)?;
    let mut counter = CdfCallCounter::new();
    let value = qei_value_counted(&loaded.model, &batch, t, acc, &mut counter)?;
    let mut out = format!("qei: {}\nthreshold: {}\ncdf calls:\n", significant(value), t);
    out.push_str(&count_table(&counter));
    Ok(out)
}

fn count_table(counter: &CdfCallCounter) -> String {
    let mut rows: Vec<_> = counter.iter().collect();
    rows.sort_by(|a, b| b.0.cmp(&a.0));
    let mut out = String::new();
    for (dim, n) in rows {
        writeln!(out, "  dim {dim}: {n}").unwrap();
    }
    out
}

fn gradcheck(args: &GradcheckArgs, acc: &CdfAccuracy) -> Result<String, CliError> {
    if !(args.fd_step > 0.0) || !(args.tolerance >= 0.0) {
        return Err(CliError::Usage("--fd-step must be positive and --tolerance non-negative".into()));
    }
    let loaded = load_model(&args.input.model)?;
    let batch = load_batch(&args.input.batch, &loaded.domain)?;
    let t = threshold_for(&args.input, &loaded.model)?;
    let analytic = qei_grad(&loaded.model, &batch, t, acc)?;
    let fd = fd_gradient(&loaded.model, &batch, t, args.fd_step, acc, &mut CdfCallCounter::new())?;
    let d = batch.dim();
    let mut out = format!("qei: {}\n", significant(analytic.value));
    out.push_str("row coord analytic finite_difference error kind status\n");
    let mut worst: Option<(usize, usize, f64)> = None;
    let mut failures = 0;
    for (c, (a, f)) in analytic.flat_gradient().iter().zip(&fd).enumerate() {
        let (err, kind) = if f.abs() < 1e-9 {
            ((a - f).abs(), "abs")
        } else {
            ((a - f).abs() / f.abs(), "rel")
        };
        let ok = err < args.tolerance;
        if !ok {
            failures += 1;
        }
        if worst.is_none_or(|w| err > w.2) {
            worst = Some((c / d, c % d, err));
        }
        writeln!(
            out,
            "{} {} {:.12e} {:.12e} {:.3e} {} {}",
            c / d,
            c % d,
            a,
            f,
            err,
            kind,
            if ok { "ok" } else { "FAIL" }
        )
        .unwrap();
    }
    let (wr, wc, we) = worst.expect("batch has coordinates");
    writeln!(out, "worst coordinate: row {wr} coord {wc} error {we:.3e}").unwrap();
    if failures > 0 {
        return Err(CliError::CheckFailed {
            report: out,
            message: format!("{failures} coordinate(s) outside tolerance {}", args.tolerance),
        });
    }
    writeln!(out, "all coordinates within tolerance {}", args.tolerance).unwrap();
    Ok(out)
}

fn bench_config(args: &BenchArgs, cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            parse_json::<ExperimentConfig>(&text, &path.display().to_string())?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)
            .ok_or_else(|| CliError::Usage(format!("unknown preset {name:?} (expected desk or paper-scale)")))?,
        (None, None) => ExperimentConfig::desk(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.cdf_tol {
        cfg.final_cdf_tolerance = t;
    }
    cfg.validate().map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

fn bench(args: &BenchArgs, cli: &Cli) -> Result<String, CliError> {
    let started_at = timestamp();
    let cfg = bench_config(args, cli)?;
    let result = run_experiment(&cfg)?;
    let summary = summarize(&result);
    let dir = &cli.output_dir;
    let csv = results_csv(&result, args.omit_timing);
    write_atomic(&dir.join("results.csv"), csv.as_bytes())?;
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&dir.join("summary.json"), summary_json.as_bytes())?;
    let config_json = serde_json::to_string_pretty(&cfg).expect("config serializes");
    write_atomic(&dir.join("config.json"), config_json.as_bytes())?;
    let manifest = RunManifest {
        config_hash: config_hash(&cfg),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        started_at,
        finished_at: timestamp(),
        outputs: vec!["results.csv".into(), "summary.json".into(), "config.json".into()],
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join("manifest.json"), manifest_json.as_bytes())?;

    let mut out = String::new();
    for s in &summary.strategies {
        writeln!(
            out,
            "{}: final mean regret {:.6} (log {:.4}), 95% quantile {:.6}",
            s.strategy,
            s.mean_regret.last().copied().unwrap_or(f64::NAN),
            s.log_mean_regret.last().copied().unwrap_or(f64::NAN),
            s.q95_regret.last().copied().unwrap_or(f64::NAN)
        )
        .unwrap();
    }
    for f in &summary.first_batch {
        writeln!(
            out,
            "{}: first batch mean qEI {:.6}, mean realized improvement {:.6}",
            f.strategy, f.mean_qei, f.mean_realized_improvement
        )
        .unwrap();
    }
    if !summary.failures.is_empty() {
        writeln!(out, "{} strategy failure(s) recorded in summary.json", summary.failures.len()).unwrap();
    }
    writeln!(out, "wrote results.csv, summary.json, config.json, manifest.json to {}", dir.display()).unwrap();
    Ok(out)
}

fn plot(args: &PlotArgs, output_dir: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(&args.summary)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.summary.display())))?;
    let summary: Summary = parse_json(&text, &args.summary.display().to_string())?;
    let svg = plot::regret_svg(&summary)?;
    let path = args.output.clone().unwrap_or_else(|| output_dir.join("regret.svg"));
    write_atomic(&path, svg.as_bytes())?;
    Ok(format!("wrote {}\n", path.display()))
}

fn timing(args: &TimingArgs, seed: u64, acc: &CdfAccuracy, output_dir: &Path) -> Result<String, CliError> {
    if args.ds.iter().chain(&args.qs).any(|&v| v == 0) {
        return Err(CliError::Usage("--d and --q entries must be positive".into()));
    }
    let rows = timing_sweep(&args.ds, &args.qs, args.repeats, seed, acc)?;
    let csv = timing_csv(&rows);
    write_atomic(&output_dir.join("timing.csv"), csv.as_bytes())?;
    Ok(csv)
}
