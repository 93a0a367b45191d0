//! `specmmd` command line: run a two-sample test on CSV data, drive Monte
//! Carlo simulation grids, and benchmark the calibration back-ends.
//!
//! Exit codes: 0 success, 2 input/config/data error, 3 numeric error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specmmd::dataset::{load_two_sample, summarize, DatasetManifest, LabelSource};
use specmmd::error::Error;
use specmmd::experiment::{run_grid, ExperimentSpec};
use specmmd::kernel::{KernelMode, TwoSample};
use specmmd::pipeline::{run_test, StatisticKind, TestOptions, TestResult};
use specmmd::resample::CalibMethod;
use specmmd::stream::{sample_matrix, DistSpec, StreamKey};

#[derive(Parser)]
#[command(
    name = "specmmd",
    version,
    about = "Kernel two-sample testing with spectrally truncated MMD statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether two labeled groups in a CSV file share a distribution.
    Test(TestArgs),
    /// Run a simulation grid from a JSON config and write rejection rates as CSV.
    Simulate(SimulateArgs),
    /// Time the calibration back-ends on synthetic data of a given shape.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelsArg {
    Multi,
    Single,
}

impl From<KernelsArg> for KernelMode {
    fn from(v: KernelsArg) -> Self {
        match v {
            KernelsArg::Multi => KernelMode::Multi,
            KernelsArg::Single => KernelMode::Single,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalibrationArg {
    Mb1,
    Mb2,
    Permutation,
}

impl std::fmt::Display for CalibrationArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CalibrationArg::Mb1 => "mb1",
            CalibrationArg::Mb2 => "mb2",
            CalibrationArg::Permutation => "permutation",
        })
    }
}

impl From<CalibrationArg> for CalibMethod {
    fn from(v: CalibrationArg) -> Self {
        match v {
            CalibrationArg::Mb1 => CalibMethod::Mb1,
            CalibrationArg::Mb2 => CalibMethod::Mb2,
            CalibrationArg::Permutation => CalibMethod::Permutation,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatisticArg {
    Spectral,
    Mmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputArg {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with one row per observation.
    #[arg(long)]
    data: PathBuf,
    /// Separate one-column label file aligned with the data rows.
    #[arg(long, conflicts_with = "label_column")]
    labels: Option<PathBuf>,
    /// Label column inside the data file (header name or 0-based index).
    #[arg(long)]
    label_column: Option<String>,
    /// Label selecting the X group.
    #[arg(long)]
    group_a: String,
    /// Label selecting the Y group.
    #[arg(long)]
    group_b: String,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Treat the first row as data, not a header.
    #[arg(long)]
    no_header: bool,
    /// Print the dataset summary and exit without testing.
    #[arg(long)]
    summary_only: bool,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = StatisticArg::Spectral)]
    statistic: StatisticArg,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truncation level (number of leading spectral directions).
    #[arg(long, default_value_t = 1)]
    j: usize,
    /// Calibration replicates.
    #[arg(long, default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = KernelsArg::Multi)]
    kernels: KernelsArg,
    #[arg(long, value_enum, default_value_t = CalibrationArg::Mb1)]
    calibration: CalibrationArg,
    #[arg(long, value_enum, default_value_t = OutputArg::Text)]
    output: OutputArg,
    /// Worker threads (0 = library default). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config: {"experiments": [ ... ]}.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every experiment's seed with seed + experiment index.
    #[arg(long)]
    seed: Option<u64>,
    /// Write 0.000 in the seconds column for byte-reproducible output.
    #[arg(long)]
    no_timing: bool,
    /// Format of the per-method summary echoed after a run with --out.
    #[arg(long, value_enum, default_value_t = OutputArg::Text)]
    output: OutputArg,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Calibration back-ends to time; `permutation` times the full-MMD
    /// permutation baseline.
    #[arg(long, value_delimiter = ',', default_values_t = vec![CalibrationArg::Mb1, CalibrationArg::Permutation])]
    methods: Vec<CalibrationArg>,
    #[command(flatten)]
    common: CommonArgs,
}

struct StagedError {
    stage: &'static str,
    source: Error,
}

trait Stage<T> {
    fn stage(self, name: &'static str) -> Result<T, StagedError>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, name: &'static str) -> Result<T, StagedError> {
        self.map_err(|source| StagedError {
            stage: name,
            source,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [stage {}]: {}", e.stage, e.source);
            if e.source.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn init_threads(threads: usize) {
    if threads > 0 {
        // Ignore the error when a pool already exists (tests call in-process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn cmd_test(args: TestArgs) -> Result<(), StagedError> {
    init_threads(args.common.threads);
    let labels = match (&args.labels, &args.label_column) {
        (Some(path), None) => LabelSource::File(path.clone()),
        (None, Some(col)) => LabelSource::Column(col.clone()),
        _ => {
            return Err(Error::Parameter(
                "exactly one of --labels or --label-column is required".into(),
            ))
            .stage("load")
        }
    };
    let manifest = DatasetManifest {
        data_path: args.data.clone(),
        labels,
        group_a: args.group_a.clone(),
        group_b: args.group_b.clone(),
        delimiter: args.delimiter as u8,
        has_header: !args.no_header,
    };
    let sample = load_two_sample(&manifest).stage("load")?;

    if args.summary_only {
        let summary = summarize(&sample);
        match args.common.output {
            OutputArg::Json => println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("serializable")
            ),
            _ => print!("{}", summary.render_text()),
        }
        return Ok(());
    }

    let opts = TestOptions {
        statistic: match args.statistic {
            StatisticArg::Spectral => StatisticKind::Spectral,
            StatisticArg::Mmd => StatisticKind::Mmd,
        },
        kernels: args.common.kernels.into(),
        calibration: args.common.calibration.into(),
        j: args.common.j,
        b: args.common.b,
        alpha: args.common.alpha,
    };
    let key = StreamKey::new(args.common.seed);
    let result = run_test(&sample, &opts, &key).stage("test")?;
    render_test_result(&result, args.common.output).stage("output")
}

fn statistic_name(s: StatisticKind) -> &'static str {
    match s {
        StatisticKind::Spectral => "spectral",
        StatisticKind::Mmd => "mmd",
    }
}

fn kernels_name(k: KernelMode) -> &'static str {
    match k {
        KernelMode::Multi => "multi",
        KernelMode::Single => "single",
    }
}

fn render_test_result(result: &TestResult, output: OutputArg) -> Result<(), Error> {
    match output {
        OutputArg::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(result).expect("serializable")
            );
        }
        OutputArg::Csv => {
            println!(
                "m,n,d,statistic,kernels,calibration,j,b,seed,gamma_med,statistic_scaled,p_value,reject,gram_s,eigen_s,calibrate_s,total_s"
            );
            let p = &result.provenance;
            println!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                p.m,
                p.n,
                p.d,
                statistic_name(p.statistic),
                kernels_name(p.kernels),
                p.calibration,
                p.j_requested,
                p.b,
                p.seed,
                p.gamma_med,
                result.statistic_scaled,
                result.p_value,
                result.reject,
                result.timing.gram_s,
                result.timing.eigen_s,
                result.timing.calibrate_s,
                result.timing.total_s
            );
        }
        OutputArg::Text => {
            let p = &result.provenance;
            println!(
                "two-sample test: m={}, n={}, d={} | {} statistic, {} kernels, {} calibration, J={}, B={}, seed={}",
                p.m, p.n, p.d, statistic_name(p.statistic), kernels_name(p.kernels), p.calibration, p.j_requested, p.b, p.seed
            );
            println!("scaled statistic  {:.6}", result.statistic_scaled);
            println!("p-value           {:.6}", result.p_value);
            println!(
                "decision          {} H0 at alpha = {}",
                if result.reject {
                    "reject"
                } else {
                    "do not reject"
                },
                result.alpha
            );
            if !result.per_kernel.is_empty() {
                println!("per-kernel diagnostics:");
                println!(
                    "  {:>12} {:>4} {:>14} {:>14} {:>12} {:>12}",
                    "gamma", "J", "t_unbiased", "t_biased", "sigma1^2", "d_hat1"
                );
                for k in &result.per_kernel {
                    println!(
                        "  {:>12.5} {:>4} {:>14.6e} {:>14.6e} {:>12.6} {:>12.6}",
                        k.gamma, k.j_used, k.t_unbiased, k.t_biased, k.sigma_sq[0], k.d_hat[0]
                    );
                }
            }
            println!(
                "timing: gram {:.4}s, eigen {:.4}s, calibrate {:.4}s, total {:.4}s",
                result.timing.gram_s,
                result.timing.eigen_s,
                result.timing.calibrate_s,
                result.timing.total_s
            );
        }
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct SimulationConfig {
    experiments: Vec<ExperimentSpec>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), StagedError> {
    init_threads(args.threads);
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", args.config.display())))
        .stage("config")?;
    let mut config: SimulationConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", args.config.display())))
        .stage("config")?;
    if config.experiments.is_empty() {
        return Err(Error::Design("config lists no experiments".into())).stage("config");
    }
    for (idx, spec) in config.experiments.iter().enumerate() {
        spec.validate()
            .map_err(|e| Error::Parameter(format!("experiment {idx}: {e}")))
            .stage("config")?;
    }
    if let Some(seed) = args.seed {
        for (idx, spec) in config.experiments.iter_mut().enumerate() {
            spec.seed = seed + idx as u64;
        }
    }

    let mut csv_bytes: Vec<u8> = Vec::new();
    let reports =
        run_grid(&config.experiments, &mut csv_bytes, !args.no_timing).stage("simulate")?;

    match &args.out {
        Some(path) => std::fs::write(path, &csv_bytes)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
            .stage("output")?,
        None => {
            std::io::stdout()
                .write_all(&csv_bytes)
                .map_err(Error::from)
                .stage("output")?;
        }
    }

    // Summary on stdout (the CSV already went to --out when given).
    if args.out.is_some() {
        match args.output {
            OutputArg::Csv => {}
            OutputArg::Json => {
                let echo: Vec<serde_json::Value> = config
                    .experiments
                    .iter()
                    .zip(&reports)
                    .map(|(spec, report)| {
                        serde_json::json!({ "experiment": spec, "result": report })
                    })
                    .collect();
                println!(
                    "{}",
                    serde_json::to_string_pretty(&echo).expect("serializable")
                );
            }
            OutputArg::Text => {
                for (spec, report) in config.experiments.iter().zip(&reports) {
                    for row in &report.per_method {
                        println!(
                            "{} {} d={} m={} n={} {}: rate {:.3} (mc se {:.3}, {} reps, {:.2}s)",
                            spec.dgp.kind.id(),
                            spec.dgp.kind.params_string(),
                            spec.dgp.d,
                            spec.dgp.m,
                            spec.dgp.n,
                            row.method.name(),
                            row.rejection_rate,
                            row.mc_se,
                            row.replications,
                            row.seconds
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), StagedError> {
    init_threads(args.common.threads);
    let key = StreamKey::new(args.common.seed);
    let x =
        sample_matrix(&key.substream(0), &DistSpec::StdNormal, args.m, args.d).stage("bench")?;
    let y =
        sample_matrix(&key.substream(1), &DistSpec::StdNormal, args.n, args.d).stage("bench")?;
    let sample = TwoSample::new(x, y).stage("bench")?;

    struct BenchRow {
        method: &'static str,
        gram_s: f64,
        eigen_s: f64,
        calibrate_s: f64,
        total_s: f64,
        p_value: f64,
    }
    let mut rows = Vec::new();
    for method in &args.methods {
        let opts = match method {
            CalibrationArg::Mb1 | CalibrationArg::Mb2 => TestOptions {
                statistic: StatisticKind::Spectral,
                kernels: args.common.kernels.into(),
                calibration: (*method).into(),
                j: args.common.j,
                b: args.common.b,
                alpha: args.common.alpha,
            },
            CalibrationArg::Permutation => TestOptions {
                statistic: StatisticKind::Mmd,
                kernels: KernelMode::Single,
                calibration: CalibMethod::Permutation,
                j: args.common.j,
                b: args.common.b,
                alpha: args.common.alpha,
            },
        };
        let result = run_test(&sample, &opts, &key.substream(2)).stage("bench")?;
        rows.push(BenchRow {
            method: match method {
                CalibrationArg::Mb1 => "mb1",
                CalibrationArg::Mb2 => "mb2",
                CalibrationArg::Permutation => "mmd_permutation",
            },
            gram_s: result.timing.gram_s,
            eigen_s: result.timing.eigen_s,
            calibrate_s: result.timing.calibrate_s,
            total_s: result.timing.total_s,
            p_value: result.p_value,
        });
    }

    match args.common.output {
        OutputArg::Csv => {
            println!("method,m,n,d,b,gram_s,eigen_s,calibrate_s,total_s,p_value");
            for r in &rows {
                println!(
                    "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    r.method,
                    args.m,
                    args.n,
                    args.d,
                    args.common.b,
                    r.gram_s,
                    r.eigen_s,
                    r.calibrate_s,
                    r.total_s,
                    r.p_value
                );
            }
        }
        _ => {
            println!(
                "bench shape: m={}, n={}, d={}, B={}, J={}, seed={}",
                args.m, args.n, args.d, args.common.b, args.common.j, args.common.seed
            );
            println!(
                "{:<16} {:>10} {:>10} {:>12} {:>10} {:>10}",
                "method", "gram_s", "eigen_s", "calibrate_s", "total_s", "p_value"
            );
            for r in &rows {
                println!(
                    "{:<16} {:>10.4} {:>10.4} {:>12.4} {:>10.4} {:>10.4}",
                    r.method, r.gram_s, r.eigen_s, r.calibrate_s, r.total_s, r.p_value
                );
            }
            if let (Some(mb1), Some(perm)) = (
                rows.iter().find(|r| r.method == "mb1"),
                rows.iter().find(|r| r.method == "mmd_permutation"),
            ) {
                if perm.calibrate_s > 0.0 {
                    println!(
                        "calibration speedup mb1 vs permutation: {:.1}x",
                        perm.calibrate_s / mb1.calibrate_s.max(1e-12)
                    );
                }
            }
        }
    }
    Ok(())
}
