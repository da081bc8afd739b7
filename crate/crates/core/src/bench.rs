//! Experiment driver behind `hetpar-bench`.
//!
//! Operands are generated from the seed, so kernel outputs are bit-identical
//! across runs and across partitioning modes; only timings vary.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::TimingClock;
use crate::emulation::{EmulatedKernel, ProfileSchedule};
use crate::kernels::{
    quantize_q40, quantize_q8, read_q40_file, write_q40_file, CopyKernel, GemvQ40Kernel, I8Gemm,
    I8GemmKernel, Q40Weight, QK,
};
use crate::perf_table::{KernelClass, PerformanceTable, RatioTrace};
use crate::pool::{CoreSet, Pinning, PoolInfo, RangeKernel, ThreadPool};
use crate::scheduler::{KernelLaunchReport, Scheduler};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gemm,
    Gemv,
    Copy,
    Trace,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gemm,
    Gemv,
    Copy,
}

impl KernelKind {
    pub fn class(self) -> KernelClass {
        KernelClass::new(match self {
            KernelKind::Gemm => "gemm-i8",
            KernelKind::Gemv => "gemv-q40",
            KernelKind::Copy => "copy",
        })
        .expect("non-empty")
    }

    pub fn default_shape(self) -> Shape {
        match self {
            KernelKind::Gemm => Shape::new(256, 1024, 1024),
            KernelKind::Gemv => Shape::new(1, 4096, 4096),
            KernelKind::Copy => Shape::new(1, 1024, 4096),
        }
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gemm" => Ok(KernelKind::Gemm),
            "gemv" => Ok(KernelKind::Gemv),
            "copy" => Ok(KernelKind::Copy),
            other => Err(format!("unknown kernel '{other}'")),
        }
    }
}

/// `M x N x K`. For GEMV, N is output rows and K is columns (M must be 1).
/// Copy moves `M * N * K` f32 elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl Shape {
    pub const fn new(m: usize, n: usize, k: usize) -> Self {
        Shape { m, n, k }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.n, self.k)
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims: Vec<&str> = s.split(['x', 'X']).collect();
        if dims.len() != 3 {
            return Err(Error::Parse {
                position: 0,
                message: format!("shape '{s}' is not MxNxK"),
            });
        }
        let mut out = [0usize; 3];
        let mut pos = 0;
        for (slot, d) in out.iter_mut().zip(&dims) {
            *slot = d.parse().map_err(|_| Error::Parse {
                position: pos,
                message: format!("invalid dimension '{d}'"),
            })?;
            pos += d.len() + 1;
        }
        Ok(Shape::new(out[0], out[1], out[2]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Static,
    Dynamic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Static => "static",
            Mode::Dynamic => "dynamic",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub experiment: Experiment,
    /// Kernel for `trace` and `compare`; the other experiments imply it.
    pub kernel: KernelKind,
    pub shape: Shape,
    pub iterations: usize,
    pub warmup: usize,
    pub cores: CoreSet,
    pub pinning: Pinning,
    pub clock: TimingClock,
    pub alpha: f64,
    pub initial_ratio: f64,
    pub emulation: Option<String>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
    /// Load GEMV weights from a Q40W file instead of generating them.
    pub weights_in: Option<PathBuf>,
    /// Persist the GEMV weights used.
    pub weights_out: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(experiment: Experiment, cores: CoreSet) -> Self {
        let kernel = match experiment {
            Experiment::Gemv => KernelKind::Gemv,
            Experiment::Copy => KernelKind::Copy,
            _ => KernelKind::Gemm,
        };
        BenchConfig {
            experiment,
            kernel,
            shape: kernel.default_shape(),
            iterations: 30,
            warmup: 5,
            cores,
            pinning: Pinning::BestEffort,
            clock: TimingClock::Monotonic,
            alpha: crate::perf_table::DEFAULT_ALPHA,
            initial_ratio: 1.0,
            emulation: None,
            seed: 0,
            output: None,
            format: ReportFormat::Csv,
            weights_in: None,
            weights_out: None,
        }
    }

    /// Kernel actually run by this experiment.
    pub fn kernel_kind(&self) -> KernelKind {
        match self.experiment {
            Experiment::Gemm => KernelKind::Gemm,
            Experiment::Gemv => KernelKind::Gemv,
            Experiment::Copy => KernelKind::Copy,
            Experiment::Trace | Experiment::Compare => self.kernel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.warmup >= self.iterations {
            return Err(Error::invalid(format!(
                "warmup ({}) must be less than iterations ({})",
                self.warmup, self.iterations
            )));
        }
        let Shape { m, n, k } = self.shape;
        match self.kernel_kind() {
            KernelKind::Gemm if k > 1 << 16 => {
                return Err(Error::invalid("GEMM K must be <= 65536"));
            }
            KernelKind::Gemv if m != 1 => {
                return Err(Error::invalid("GEMV shape must be 1xNxK"));
            }
            KernelKind::Gemv if k % QK != 0 => {
                return Err(Error::invalid(format!("GEMV K must be a multiple of {QK}")));
            }
            _ => {}
        }
        if m == 0 || n == 0 || k == 0 {
            return Err(Error::invalid("shape dimensions must be positive"));
        }
        if let Some(spec) = &self.emulation {
            ProfileSchedule::parse(spec, self.cores.len())?;
        }
        PerformanceTable::new(self.cores.len(), self.alpha, self.initial_ratio)?;
        Ok(())
    }
}

/// One measured launch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mode: Mode,
    pub makespan_s: f64,
    pub elapsed_s: Vec<f64>,
    pub units: Vec<usize>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub launches: usize,
    pub median_makespan_s: f64,
    pub p10_makespan_s: f64,
    pub p90_makespan_s: f64,
    /// GEMV only: bytes of W + x + y per median launch.
    pub bandwidth_bytes_per_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub modes: Vec<ModeSummary>,
    /// static median / dynamic median, compare mode only.
    pub speedup: Option<f64>,
    /// FNV-1a of the final kernel output bytes.
    pub output_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub experiment: Experiment,
    pub kernel: KernelKind,
    pub shape: Shape,
    pub n_cores: usize,
    pub clock: TimingClock,
    pub pool: Option<PoolInfo>,
    pub records: Vec<IterationRecord>,
    pub summary: Option<BenchSummary>,
    /// Ratio snapshot after every table update (dynamic mode).
    #[serde(default)]
    pub trace: Option<RatioTrace>,
}

impl BenchResult {
    pub fn empty(n_cores: usize) -> Self {
        BenchResult {
            experiment: Experiment::Compare,
            kernel: KernelKind::Gemm,
            shape: KernelKind::Gemm.default_shape(),
            n_cores,
            clock: TimingClock::Monotonic,
            pool: None,
            records: Vec::new(),
            summary: None,
            trace: None,
        }
    }

    pub fn records_for(&self, mode: Mode) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(move |r| r.mode == mode)
    }

    pub fn mode_summary(&self, mode: Mode) -> Option<&ModeSummary> {
        self.summary.as_ref()?.modes.iter().find(|m| m.mode == mode)
    }
}

/// Linear-interpolated percentile of unsorted data, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed-determined operands for one kernel.
pub enum Workload {
    Gemm(I8Gemm),
    Gemv { weights: Q40Weight, x: Vec<f32> },
    Copy(Vec<f32>),
}

impl Workload {
    pub fn generate(kind: KernelKind, shape: Shape, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Shape { m, n, k } = shape;
        Ok(match kind {
            KernelKind::Gemm => {
                let a = (0..m * k).map(|_| rng.random::<u8>()).collect();
                let b = (0..k * n).map(|_| rng.random::<i8>()).collect();
                Workload::Gemm(I8Gemm::new(m, n, k, a, b)?)
            }
            KernelKind::Gemv => {
                // x first, so a reloaded weight file sees the same input.
                let x = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w: Vec<f32> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
                Workload::Gemv {
                    weights: quantize_q40(&w, n, k)?,
                    x,
                }
            }
            KernelKind::Copy => {
                Workload::Copy((0..m * n * k).map(|_| rng.random::<f32>()).collect())
            }
        })
    }

    pub fn total_units(&self) -> usize {
        match self {
            Workload::Gemm(p) => p.n(),
            Workload::Gemv { weights, .. } => weights.rows,
            Workload::Copy(v) => v.len(),
        }
    }

    /// Bytes touched by one GEMV launch: weights, f32 input and f32 output.
    pub fn gemv_bytes(&self) -> Option<usize> {
        match self {
            Workload::Gemv { weights, .. } => {
                Some(weights.byte_size() + weights.cols * 4 + weights.rows * 4)
            }
            _ => None,
        }
    }

    /// Runs one launch and returns its report plus the output checksum.
    pub fn launch(
        &self,
        sched: &mut Scheduler,
        class: &KernelClass,
        mode: Mode,
        emulate: Option<&EmulatedProfile<'_>>,
    ) -> Result<(KernelLaunchReport, u64)> {
        fn go(
            sched: &mut Scheduler,
            class: &KernelClass,
            units: usize,
            mode: Mode,
            kernel: &dyn RangeKernel,
            emulate: Option<&EmulatedProfile<'_>>,
        ) -> Result<KernelLaunchReport> {
            let wrapped;
            let kernel: &dyn RangeKernel = match emulate {
                Some(e) => {
                    wrapped = EmulatedKernel::new(kernel, e.profile, e.clock);
                    &wrapped
                }
                None => kernel,
            };
            match mode {
                Mode::Static => sched.run_static(class, units, kernel),
                Mode::Dynamic => sched.run_kernel(class, units, kernel, true),
            }
        }

        let units = self.total_units();
        Ok(match self {
            Workload::Gemm(p) => {
                let k = I8GemmKernel::new(p);
                let rep = go(sched, class, units, mode, &k, emulate)?;
                let sum = fnv1a(k.into_output().iter().flat_map(|v| v.to_le_bytes()));
                (rep, sum)
            }
            Workload::Gemv { weights, x } => {
                let qx = quantize_q8(x)?;
                let k = GemvQ40Kernel::new(weights, &qx)?;
                let rep = go(sched, class, units, mode, &k, emulate)?;
                let sum = fnv1a(k.into_output().iter().flat_map(|v| v.to_le_bytes()));
                (rep, sum)
            }
            Workload::Copy(src) => {
                let k = CopyKernel::new(src);
                let rep = go(sched, class, units, mode, &k, emulate)?;
                let sum = fnv1a(k.into_output().iter().flat_map(|v| v.to_le_bytes()));
                (rep, sum)
            }
        })
    }
}

/// Profile and clock for one emulated launch.
pub struct EmulatedProfile<'a> {
    pub profile: &'a crate::emulation::CoreProfile,
    pub clock: TimingClock,
}

fn summarize(mode: Mode, records: &[&IterationRecord], bytes: Option<usize>) -> ModeSummary {
    let makespans: Vec<f64> = records.iter().map(|r| r.makespan_s).collect();
    let median = percentile(&makespans, 0.5);
    ModeSummary {
        mode,
        launches: records.len(),
        median_makespan_s: median,
        p10_makespan_s: percentile(&makespans, 0.1),
        p90_makespan_s: percentile(&makespans, 0.9),
        bandwidth_bytes_per_s: bytes.map(|b| b as f64 / median),
    }
}

/// Runs the configured experiment. Writes the report when `output` is set.
pub fn run_bench(config: &BenchConfig) -> Result<BenchResult> {
    config.validate()?;
    let kind = config.kernel_kind();
    let n = config.cores.len();
    let class = kind.class();

    let workload = match (&config.weights_in, kind) {
        (Some(path), KernelKind::Gemv) => {
            let weights = read_q40_file(path)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let x = (0..weights.cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            Workload::Gemv { weights, x }
        }
        _ => Workload::generate(kind, config.shape, config.seed)?,
    };
    if let (Some(path), Workload::Gemv { weights, .. }) = (&config.weights_out, &workload) {
        write_q40_file(weights, path)?;
    }

    let schedule = config
        .emulation
        .as_deref()
        .map(|s| ProfileSchedule::parse(s, n))
        .transpose()?;

    let modes: &[Mode] = match config.experiment {
        Experiment::Compare => &[Mode::Static, Mode::Dynamic],
        _ => &[Mode::Dynamic],
    };

    let mut records = Vec::new();
    let mut trace = RatioTrace::new(n);
    let mut pool_info = None;
    let mut checksums = Vec::new();

    for &mode in modes {
        let pool = ThreadPool::with_clock(config.cores.clone(), config.pinning, config.clock)?;
        pool_info.get_or_insert_with(|| pool.info().clone());
        let table = Arc::new(PerformanceTable::new(n, config.alpha, config.initial_ratio)?);
        let mut sched = Scheduler::new(pool, table)?;
        let mut last_sum = 0;

        for i in 0..config.iterations {
            let emulate = schedule.as_ref().map(|s| EmulatedProfile {
                profile: s.profile_at(i),
                clock: config.clock,
            });
            let (rep, sum) = workload.launch(&mut sched, &class, mode, emulate.as_ref())?;
            last_sum = sum;
            if mode == Mode::Dynamic && rep.updated {
                trace.record(i, &class, &rep.updated_ratios);
            }
            if i >= config.warmup {
                records.push(IterationRecord {
                    iteration: i,
                    mode,
                    makespan_s: rep.makespan,
                    elapsed_s: rep.timing.per_core_elapsed.clone(),
                    units: rep.plan.partitions.clone(),
                    ratios: rep.updated_ratios.clone(),
                });
            }
        }
        checksums.push(last_sum);
    }

    if checksums.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::OutputMismatch);
    }

    let bytes = workload.gemv_bytes();
    let mode_summaries: Vec<ModeSummary> = modes
        .iter()
        .map(|&m| {
            let rs: Vec<&IterationRecord> = records.iter().filter(|r| r.mode == m).collect();
            summarize(m, &rs, bytes)
        })
        .collect();
    let speedup = match mode_summaries.as_slice() {
        [s, d] => Some(s.median_makespan_s / d.median_makespan_s),
        _ => None,
    };

    let result = BenchResult {
        experiment: config.experiment,
        kernel: kind,
        shape: config.shape,
        n_cores: n,
        clock: config.clock,
        pool: pool_info,
        records,
        summary: Some(BenchSummary {
            modes: mode_summaries,
            speedup,
            output_checksum: format!("{:016x}", checksums[0]),
        }),
        trace: Some(trace),
    };

    if let Some(path) = &config.output {
        if config.experiment == Experiment::Trace && config.format == ReportFormat::Csv {
            let csv = result.trace.as_ref().map(RatioTrace::to_csv).unwrap_or_default();
            std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
        } else {
            emit_report(&result, config.format, path)?;
        }
    }
    Ok(result)
}

/// CSV header: `iteration,mode,makespan_s`, then per-core elapsed, units and
/// ratios.
pub fn csv_header(n_cores: usize) -> String {
    let mut h = String::from("iteration,mode,makespan_s");
    for suffix in ["elapsed_s", "units", "ratio"] {
        for i in 0..n_cores {
            let _ = write!(h, ",core_{i}_{suffix}");
        }
    }
    h
}

pub fn render_csv(result: &BenchResult) -> String {
    let mut out = csv_header(result.n_cores);
    out.push('\n');
    for r in &result.records {
        let _ = write!(out, "{},{},{:.9}", r.iteration, r.mode, r.makespan_s);
        for e in &r.elapsed_s {
            let _ = write!(out, ",{e:.9}");
        }
        for u in &r.units {
            let _ = write!(out, ",{u}");
        }
        for p in &r.ratios {
            let _ = write!(out, ",{p:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn render_json(result: &BenchResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("bench result serializes");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<BenchResult> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

pub fn emit_report(result: &BenchResult, format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => render_csv(result),
        ReportFormat::Json => render_json(result),
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Human-readable summary for stdout.
pub fn format_summary(result: &BenchResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:?} {:?} {} on {} cores ({} clock)",
        result.experiment, result.kernel, result.shape, result.n_cores, result.clock.name()
    );
    if let Some(pool) = &result.pool {
        let pinned = pool.pinned.iter().filter(|p| **p).count();
        let _ = writeln!(
            out,
            "  pinning {:?}: {pinned}/{} workers pinned, dispatch latency {:.1} us",
            pool.pinning,
            pool.pinned.len(),
            pool.dispatch_latency_s * 1e6
        );
    }
    if let Some(summary) = &result.summary {
        for m in &summary.modes {
            let _ = write!(
                out,
                "  {:<7} median {:.6} s  p10 {:.6} s  p90 {:.6} s",
                m.mode.to_string(),
                m.median_makespan_s,
                m.p10_makespan_s,
                m.p90_makespan_s
            );
            if let Some(bw) = m.bandwidth_bytes_per_s {
                let _ = write!(out, "  bandwidth {:.2} GB/s", bw / 1e9);
            }
            out.push('\n');
        }
        if let Some(s) = summary.speedup {
            let _ = writeln!(out, "  speedup (static / dynamic): {s:.3}x");
        }
        if let Some(last) = result.records_for(Mode::Dynamic).last() {
            let ratios: Vec<String> = last.ratios.iter().map(|r| format!("{r:.3}")).collect();
            let _ = writeln!(out, "  final ratios: [{}]", ratios.join(", "));
        }
        let _ = writeln!(out, "  output checksum {}", summary.output_checksum);
    }
    out
}
