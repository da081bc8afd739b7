//! Timing sources.
//!
//! The pool and the emulation layer must read the same clock so that a
//! dilated sub-task measures exactly `factor * work` on that clock.

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Elapsed values at or below this are treated as no signal.
pub const CLOCK_EPSILON_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingClock {
    /// Process-wide monotonic wall clock.
    #[default]
    Monotonic,
    /// CPU time consumed by the calling thread (`CLOCK_THREAD_CPUTIME_ID`).
    ///
    /// On a host with fewer CPUs than workers, wall time includes the time a
    /// worker sat descheduled. Thread CPU time measures only its own compute,
    /// which is what a dedicated core would report.
    ThreadCpu,
}

impl TimingClock {
    /// Current reading in seconds. Only differences are meaningful, and
    /// `ThreadCpu` readings are only comparable within one thread.
    pub fn now(self) -> f64 {
        match self {
            TimingClock::Monotonic => {
                static EPOCH: OnceLock<Instant> = OnceLock::new();
                EPOCH.get_or_init(Instant::now).elapsed().as_secs_f64()
            }
            TimingClock::ThreadCpu => thread_cpu_seconds(),
        }
    }

    /// Picks `ThreadCpu` when the host cannot run `workers` threads at once.
    pub fn for_workers(workers: usize) -> Self {
        let cpus = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        if cpus < workers {
            TimingClock::ThreadCpu
        } else {
            TimingClock::Monotonic
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimingClock::Monotonic => "monotonic",
            TimingClock::ThreadCpu => "thread-cpu",
        }
    }
}

impl std::str::FromStr for TimingClock {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monotonic" => Ok(TimingClock::Monotonic),
            "thread-cpu" => Ok(TimingClock::ThreadCpu),
            other => Err(format!("unknown clock '{other}'")),
        }
    }
}

/// Busy-waits until `clock` reads at least `deadline`.
pub fn spin_until(clock: TimingClock, deadline: f64) {
    while clock.now() < deadline {
        std::hint::spin_loop();
    }
}

#[cfg(unix)]
fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid out-pointer for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0, "CLOCK_THREAD_CPUTIME_ID unavailable");
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

#[cfg(not(unix))]
fn thread_cpu_seconds() -> f64 {
    // No portable per-thread CPU clock; fall back to wall time.
    TimingClock::Monotonic.now()
}
