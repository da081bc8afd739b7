//! Heterogeneity-aware dynamic parallel runtime.
//!
//! Data-parallel kernels are split across a pinned thread pool in proportion
//! to per-core performance ratios, and those ratios are re-estimated from the
//! measured per-core elapsed time after every launch. A small benchmark
//! harness (`hetpar-bench`) compares this against an equal split on
//! emulated hybrid cores.
//!
//! The layers, bottom up:
//!
//! * [`clock`]: the timing source shared by the pool and the emulation.
//! * [`perf_table`]: per-kernel-class ratio vectors and their update rule.
//! * [`pool`]: one pinned worker per core with barrier-style launches.
//! * [`scheduler`]: proportional splitting plus the launch/measure/update loop.
//! * [`kernels`]: INT8 GEMM, Q4_0 GEMV and copy over output-dimension ranges.
//! * [`emulation`]: per-core slowdown factors for homogeneous machines.
//! * [`bench`]: experiment driver and report serialization.

pub mod affinity;
pub mod bench;
pub mod clock;
pub mod emulation;
mod error;
pub mod kernels;
pub mod perf_table;
pub mod pool;
pub mod scheduler;

pub use clock::TimingClock;
pub use emulation::{CoreProfile, EmulatedKernel, ProfileSchedule};
pub use error::{Error, Result};
pub use perf_table::{KernelClass, PerformanceTable, TaskTiming};
pub use pool::{CoreSet, Pinning, RangeKernel, SubTask, ThreadPool};
pub use scheduler::{split, static_equal_split, KernelLaunchReport, Scheduler, SplitPlan};
