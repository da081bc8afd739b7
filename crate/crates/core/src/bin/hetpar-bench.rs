use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use hetpar::bench::{self, BenchConfig, Experiment, KernelKind, ReportFormat, Shape};
use hetpar::{CoreSet, Error, Pinning, TimingClock};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Gemm,
    Gemv,
    Copy,
    Trace,
    Compare,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Gemm,
    Gemv,
    Copy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PinningArg {
    Strict,
    BestEffort,
    Off,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClockArg {
    Monotonic,
    ThreadCpu,
    /// thread-cpu when the host has fewer CPUs than workers
    Auto,
}

/// Compare equal and ratio-proportional partitioning of quantized kernels.
#[derive(Debug, Parser)]
#[command(name = "hetpar-bench", version)]
struct Cli {
    experiment: ExperimentArg,

    /// Kernel for trace and compare
    #[arg(long, value_enum, default_value = "gemm")]
    kernel: KernelArg,

    /// MxNxK; defaults depend on the kernel
    #[arg(long)]
    shape: Option<String>,

    /// Comma-separated core ids, or "auto" (HETPAR_CORES, else all allowed cores)
    #[arg(long, default_value = "auto")]
    cores: String,

    /// Total launches per mode, warmup included
    #[arg(long, default_value_t = 35)]
    iters: usize,

    /// Leading launches excluded from statistics
    #[arg(long, default_value_t = 5)]
    warmup: usize,

    #[arg(long, default_value_t = 0.3)]
    alpha: f64,

    #[arg(long = "init-ratio", default_value_t = 1.0)]
    init_ratio: f64,

    /// Slowdown profile(s): "<factors>" or "<factors>@<iter>[,<factors>@<iter>...]"
    #[arg(long)]
    emulate: Option<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,

    #[arg(long, value_enum, default_value = "best-effort")]
    pinning: PinningArg,

    #[arg(long, value_enum, default_value = "monotonic")]
    clock: ClockArg,

    /// Load GEMV weights from a Q40W file
    #[arg(long)]
    weights: Option<PathBuf>,

    /// Save the GEMV weights to a Q40W file
    #[arg(long)]
    save_weights: Option<PathBuf>,
}

fn resolve_cores(arg: &str) -> Result<CoreSet, Error> {
    if arg == "auto" {
        return CoreSet::from_env().unwrap_or_else(|| Ok(CoreSet::available()));
    }
    arg.parse()
}

fn build_config(cli: Cli) -> Result<BenchConfig, Error> {
    let experiment = match cli.experiment {
        ExperimentArg::Gemm => Experiment::Gemm,
        ExperimentArg::Gemv => Experiment::Gemv,
        ExperimentArg::Copy => Experiment::Copy,
        ExperimentArg::Trace => Experiment::Trace,
        ExperimentArg::Compare => Experiment::Compare,
    };
    let cores = resolve_cores(&cli.cores)?;
    let mut config = BenchConfig::new(experiment, cores);
    if matches!(experiment, Experiment::Trace | Experiment::Compare) {
        config.kernel = match cli.kernel {
            KernelArg::Gemm => KernelKind::Gemm,
            KernelArg::Gemv => KernelKind::Gemv,
            KernelArg::Copy => KernelKind::Copy,
        };
    }
    config.shape = match &cli.shape {
        Some(s) => s.parse::<Shape>()?,
        None => config.kernel_kind().default_shape(),
    };
    config.iterations = cli.iters;
    config.warmup = cli.warmup;
    config.alpha = cli.alpha;
    config.initial_ratio = cli.init_ratio;
    config.emulation = cli.emulate;
    config.seed = cli.seed;
    config.output = cli.out;
    config.format = match cli.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    config.pinning = match cli.pinning {
        PinningArg::Strict => Pinning::Strict,
        PinningArg::BestEffort => Pinning::BestEffort,
        PinningArg::Off => Pinning::Off,
    };
    config.clock = match cli.clock {
        ClockArg::Monotonic => TimingClock::Monotonic,
        ClockArg::ThreadCpu => TimingClock::ThreadCpu,
        ClockArg::Auto => TimingClock::for_workers(config.cores.len()),
    };
    config.weights_in = cli.weights;
    config.weights_out = cli.save_weights;
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("hetpar-bench: {e}");
            return ExitCode::from(2);
        }
    };
    match bench::run_bench(&config) {
        Ok(result) => {
            print!("{}", bench::format_summary(&result));
            if let Some(path) = &config.output {
                println!("  wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hetpar-bench: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
