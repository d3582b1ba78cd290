//! `cmasao` — run the optimizers and the reproduction studies from the shell.
//!
//! Exit codes: 0 success, 1 runtime error (I/O, numerical failure),
//! 2 usage error (bad flags, unknown names, invalid combinations).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cmasao::benchmarks::{
    encoding_benefit_study, rbf_comparison_study, run_trials, speedup_study, timing_study,
    Algorithm, BenchmarkFunction, EncodingStudyConfig, FunctionKind, Report, Variant,
};
use cmasao::{Aggregate, RbfKernel, SaoConfig, SigmaRate};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "cmasao",
    version,
    about = "CMA-ES and surrogate-assisted CMA-ES (CMA-SAO) benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm on one function for a number of seeded trials.
    Run(RunArgs),
    /// Baseline vs surrogate-assisted comparison with speedup per cell.
    Compare(CompareArgs),
    /// Mean ranking error of the cubic, TPS and linear kernels.
    RbfBench(RbfBenchArgs),
    /// Fit and prediction wall-clock time of the cubic RBF.
    Timing(TimingArgs),
    /// Plain vs encoded fit on a rotated ellipsoid, with a contour grid.
    Contour(ContourArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Base seed; every trial seed is derived from it.
    #[arg(long, env = "CMASAO_SEED", default_value_t = 1)]
    seed: u64,
    /// Output directory (created if absent). Without it, results go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for parallel trials (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct OptimizerArgs {
    /// Surrogate kernel: cubic, tps or linear.
    #[arg(long, default_value = "cubic")]
    kernel: RbfKernel,
    /// Test-function formulas.
    #[arg(long, value_enum, default_value_t = VariantArg::Standard)]
    variant: VariantArg,
    /// Step-size rate used when injecting the surrogate minimum.
    #[arg(long, value_enum, default_value_t = SigmaRateArg::AsPrinted)]
    sigma_rate: SigmaRateArg,
    /// Disable the stagnation stop (50·N true generations without progress).
    #[arg(long)]
    no_stagnation_guard: bool,
    /// Evaluation budget per run (default 1000·N²).
    #[arg(long)]
    max_evals: Option<usize>,
    /// Target value that counts as success.
    #[arg(long, default_value_t = 1e-10)]
    target: f64,
}

impl OptimizerArgs {
    fn config(&self) -> SaoConfig {
        SaoConfig {
            kernel: self.kernel,
            sigma_rate: self.sigma_rate.into(),
            stagnation_guard: !self.no_stagnation_guard,
            max_evals: self.max_evals,
            target_f: self.target,
            ..SaoConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Optimizer to run.
    #[arg(long, value_enum, default_value_t = AlgoArg::CmaSao)]
    algo: AlgoArg,
    /// Test function, e.g. sphere, ackley, rosenbrock.
    #[arg(long = "fn")]
    function: FunctionKind,
    /// Problem dimension N.
    #[arg(long)]
    dim: usize,
    /// Number of seeded trials.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[command(flatten)]
    opt: OptimizerArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Comma-separated test functions.
    #[arg(long = "fn", value_delimiter = ',', default_value = "sphere,ackley")]
    functions: Vec<FunctionKind>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    dims: Vec<usize>,
    /// Seeded trials per algorithm and cell.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[command(flatten)]
    opt: OptimizerArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RbfBenchArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    dims: Vec<usize>,
    /// Random training/test draws averaged per cell.
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TimingArgs {
    /// Comma-separated dimensions; the training set has floor(100·sqrt(n)) points.
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
    dims: Vec<usize>,
    /// Number of prediction points.
    #[arg(long, default_value_t = 500)]
    test: usize,
    /// Repetitions per dimension; the median is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ContourArgs {
    /// Grid points per axis.
    #[arg(long, default_value_t = 51)]
    grid: usize,
    /// Seeded repeats of the plain-vs-encoded comparison.
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    /// CMA-ES generations used to learn the covariance.
    #[arg(long, default_value_t = 40)]
    generations: usize,
    /// Held-out points per repeat.
    #[arg(long, default_value_t = 100)]
    test_points: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AlgoArg {
    CmaEs,
    CmaSao,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::CmaEs => Algorithm::CmaEs,
            AlgoArg::CmaSao => Algorithm::CmaSao,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    Standard,
    AsPrinted,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Standard => Variant::Standard,
            VariantArg::AsPrinted => Variant::AsPrinted,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SigmaRateArg {
    AsPrinted,
    CsaStandard,
}

impl From<SigmaRateArg> for SigmaRate {
    fn from(s: SigmaRateArg) -> Self {
        match s {
            SigmaRateArg::AsPrinted => SigmaRate::AsPrinted,
            SigmaRateArg::CsaStandard => SigmaRate::CsaStandard,
        }
    }
}

/// Configuration problems found before any work starts; reported as usage
/// errors (exit 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Serialize)]
struct RunSummary {
    function: String,
    n: usize,
    eps: Option<f64>,
    algo: String,
    trials: usize,
    successes: usize,
    success_rate: f64,
    mean_evals: f64,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    summary: &'a T,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::RbfBench(a) => cmd_rbf_bench(a),
        Command::Timing(a) => cmd_timing(a),
        Command::Contour(a) => cmd_contour(a),
    }
}

impl Common {
    fn prepare(&self) -> Result<()> {
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(usage("--jobs must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .context("configuring the worker pool")?;
        }
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(())
    }

    fn extension(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    /// Writer for `file_name` inside the output directory, or stdout.
    fn sink(&self, file_name: &str) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(dir) => Box::new(BufWriter::new(create(&dir.join(file_name))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn emit<T: Serialize>(&self, study: &str, config: &str, rows: Vec<T>) -> Result<()> {
        let mut out = self.sink(&format!("{study}.{}", self.extension()))?;
        let report = Report::new(study, self.seed, config, rows);
        match self.format {
            Format::Csv => report.write_csv(&mut out)?,
            Format::Json => report.write_json(&mut out)?,
        }
        out.flush()?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn positive(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(usage(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn benchmark(kind: FunctionKind, dim: usize, variant: Variant) -> Result<BenchmarkFunction> {
    BenchmarkFunction::new(kind, dim)
        .map(|f| f.with_variant(variant))
        .map_err(|e| usage(format!("--fn {kind} --dim {dim}: {e}")))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    positive("--trials", a.trials)?;
    let function = benchmark(a.function, a.dim, a.opt.variant.into())?;
    let template = a.opt.config();
    template.validate().map_err(|e| usage(e.to_string()))?;
    a.common.prepare()?;

    let algo: Algorithm = a.algo.into();
    let results = run_trials(algo, &function, a.trials, a.common.seed, &template)?;
    let agg = Aggregate::of(&results);
    let summary = RunSummary {
        function: a.function.name().to_string(),
        n: a.dim,
        eps: function.noise_eps,
        algo: algo.name().to_string(),
        trials: agg.trials,
        successes: agg.successes,
        success_rate: agg.success_rate(),
        mean_evals: agg.mean_evals,
    };

    let mut runs = a.common.sink("runs.jsonl")?;
    for r in &results {
        serde_json::to_writer(&mut runs, &r.record(a.function.name(), a.dim))?;
        writeln!(runs)?;
    }
    if a.common.out.is_none() {
        serde_json::to_writer(&mut runs, &Tagged { summary: &summary })?;
        writeln!(runs)?;
        runs.flush()?;
        return Ok(());
    }
    runs.flush()?;
    a.common.emit("summary", &format!("{a:?}"), vec![summary])
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    positive("--trials", a.trials)?;
    if a.functions.is_empty() || a.dims.is_empty() {
        return Err(usage("--fn and --dims need at least one value"));
    }
    let variant: Variant = a.opt.variant.into();
    for &kind in &a.functions {
        for &n in &a.dims {
            benchmark(kind, n, variant)?;
        }
    }
    let template = a.opt.config();
    template.validate().map_err(|e| usage(e.to_string()))?;
    a.common.prepare()?;

    let study = speedup_study(
        &a.functions,
        &a.dims,
        a.trials,
        a.common.seed,
        &template,
        variant,
    )?;
    if a.common.out.is_some() {
        let mut runs = a.common.sink("runs.jsonl")?;
        for (algo, record) in &study.runs {
            serde_json::to_writer(&mut runs, &(algo, record))?;
            writeln!(runs)?;
        }
        runs.flush()?;
    }
    a.common.emit("compare", &format!("{a:?}"), study.rows)
}

fn cmd_rbf_bench(a: RbfBenchArgs) -> Result<()> {
    positive("--repeats", a.repeats)?;
    if a.dims.contains(&0) || a.dims.is_empty() {
        return Err(usage(
            "--dims must be a non-empty list of positive integers",
        ));
    }
    a.common.prepare()?;
    let rows = rbf_comparison_study(&a.dims, a.repeats, a.common.seed)?;
    a.common.emit("rbf_bench", &format!("{a:?}"), rows)
}

fn cmd_timing(a: TimingArgs) -> Result<()> {
    positive("--test", a.test)?;
    positive("--reps", a.reps)?;
    if a.dims.contains(&0) || a.dims.is_empty() {
        return Err(usage(
            "--dims must be a non-empty list of positive integers",
        ));
    }
    a.common.prepare()?;
    let rows = timing_study(&a.dims, a.test, a.reps, a.common.seed)?;
    a.common.emit("timing", &format!("{a:?}"), rows)
}

fn cmd_contour(a: ContourArgs) -> Result<()> {
    positive("--repeats", a.repeats)?;
    positive("--generations", a.generations)?;
    positive("--test-points", a.test_points)?;
    if a.grid < 2 {
        return Err(usage("--grid must be at least 2"));
    }
    a.common.prepare()?;
    let cfg = EncodingStudyConfig {
        repeats: a.repeats,
        generations: a.generations,
        test_points: a.test_points,
        grid_res: a.grid,
    };
    let study = encoding_benefit_study(&cfg, a.common.seed)?;
    let config = format!("{a:?}");
    if a.common.out.is_some() {
        let wins = study.encoded_wins();
        a.common.emit("encoding", &config, study.rows)?;
        eprintln!(
            "encoded fit at least as good as plain fit in {wins}/{} repeats",
            a.repeats
        );
    }
    a.common.emit("contour", &config, study.grid)
}
