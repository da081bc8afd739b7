//! One worker thread per managed core.
//!
//! Workers block on a channel between launches. A launch hands each worker a
//! borrowed [`RangeKernel`] and a unit range, and [`ThreadPool::execute`]
//! does not return until every worker has reported back, which is what makes
//! lending non-`'static` work to long-lived threads sound.

use std::ops::Range;
use std::panic::{self, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::affinity;
use crate::clock::TimingClock;
use crate::perf_table::TaskTiming;
use crate::{Error, Result};

/// Work that can be executed over any half-open range of units.
///
/// `core` is the pool index of the worker running the range. Implementations
/// must tolerate concurrent calls on disjoint ranges.
pub trait RangeKernel: Sync {
    fn run(&self, core: usize, range: Range<usize>);

    /// Partitions are multiples of this many units (except the last).
    fn granularity(&self) -> usize {
        1
    }
}

impl<F> RangeKernel for F
where
    F: Fn(usize, Range<usize>) + Sync,
{
    fn run(&self, core: usize, range: Range<usize>) {
        self(core, range)
    }
}

/// Ordered list of distinct logical core ids; position `i` is core index `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreSet(Vec<usize>);

impl CoreSet {
    pub fn new(core_ids: Vec<usize>) -> Result<Self> {
        if core_ids.is_empty() {
            return Err(Error::invalid("core set must not be empty"));
        }
        for (i, id) in core_ids.iter().enumerate() {
            if core_ids[..i].contains(id) {
                return Err(Error::invalid(format!("duplicate core id {id}")));
            }
        }
        Ok(CoreSet(core_ids))
    }

    /// Cores `0..n`.
    pub fn first_n(n: usize) -> Result<Self> {
        CoreSet::new((0..n).collect())
    }

    /// Every core the process may run on.
    pub fn available() -> Self {
        CoreSet(affinity::available_cores())
    }

    /// Reads a comma-separated id list from `HETPAR_CORES`.
    pub fn from_env() -> Option<Result<Self>> {
        std::env::var("HETPAR_CORES").ok().map(|v| v.parse())
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for CoreSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut pos = 0;
        for tok in s.split(',') {
            let t = tok.trim();
            let id = t.parse::<usize>().map_err(|_| Error::Parse {
                position: pos,
                message: format!("invalid core id '{t}'"),
            })?;
            ids.push(id);
            pos += tok.len() + 1;
        }
        CoreSet::new(ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pinning {
    /// Failure to pin any worker is an error.
    Strict,
    /// Failures are recorded in [`PoolInfo`] and the worker runs unpinned.
    #[default]
    BestEffort,
    /// No affinity calls.
    Off,
}

impl FromStr for Pinning {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Pinning::Strict),
            "best-effort" | "best_effort" => Ok(Pinning::BestEffort),
            "off" => Ok(Pinning::Off),
            other => Err(format!("unknown pinning mode '{other}'")),
        }
    }
}

/// Pinning outcomes and dispatch overhead, reported alongside benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolInfo {
    pub core_ids: Vec<usize>,
    pub pinning: Pinning,
    /// Per worker: whether the affinity call succeeded.
    pub pinned: Vec<bool>,
    /// Per worker: the affinity error, if any.
    pub pin_errors: Vec<Option<String>>,
    pub clock: TimingClock,
    /// Round-trip latency of an empty launch, measured once at creation. It
    /// is not part of any per-core elapsed value.
    pub dispatch_latency_s: f64,
}

/// One core's share of a launch.
pub struct SubTask<'a> {
    pub core_index: usize,
    pub range: Range<usize>,
    pub work: &'a dyn RangeKernel,
}

impl<'a> SubTask<'a> {
    pub fn new(core_index: usize, range: Range<usize>, work: &'a dyn RangeKernel) -> Self {
        SubTask {
            core_index,
            range,
            work,
        }
    }
}

struct Job {
    work: *const (dyn RangeKernel + 'static),
    range: Range<usize>,
}

// SAFETY: `work` points at a `Sync` kernel that `execute` keeps borrowed
// until the worker has sent its completion, so sharing it across threads is
// the same as sharing `&dyn RangeKernel`.
unsafe impl Send for Job {}

enum Message {
    Run(Job),
    Ping,
}

struct Done {
    core_index: usize,
    outcome: std::result::Result<f64, String>,
}

struct Worker {
    tx: Sender<Message>,
    handle: JoinHandle<()>,
}

pub struct ThreadPool {
    workers: Vec<Worker>,
    done_rx: Receiver<Done>,
    info: PoolInfo,
    closed: bool,
}

impl ThreadPool {
    pub fn new(cores: CoreSet, pinning: Pinning) -> Result<Self> {
        Self::with_clock(cores, pinning, TimingClock::Monotonic)
    }

    pub fn with_clock(cores: CoreSet, pinning: Pinning, clock: TimingClock) -> Result<Self> {
        let (done_tx, done_rx) = mpsc::channel::<Done>();
        let (pin_tx, pin_rx) = mpsc::channel::<(usize, Option<String>)>();
        let mut workers = Vec::with_capacity(cores.len());

        for (index, &core_id) in cores.ids().iter().enumerate() {
            let (tx, rx) = mpsc::channel::<Message>();
            let done_tx = done_tx.clone();
            let pin_tx = pin_tx.clone();
            let spawned = std::thread::Builder::new()
                .name(format!("hetpar-{index}"))
                .spawn(move || {
                    let pin_err = match pinning {
                        Pinning::Off => None,
                        _ => affinity::pin_current_thread(core_id)
                            .err()
                            .map(|e| e.to_string()),
                    };
                    let _ = pin_tx.send((index, pin_err));
                    drop(pin_tx);
                    worker_loop(index, clock, rx, done_tx);
                });
            match spawned {
                Ok(handle) => workers.push(Worker { tx, handle }),
                Err(e) => {
                    shutdown_workers(&mut workers);
                    return Err(Error::ResourceExhausted(e.to_string()));
                }
            }
        }
        drop(pin_tx);

        let n = cores.len();
        let mut pin_errors: Vec<Option<String>> = vec![None; n];
        for _ in 0..n {
            let (index, err) = pin_rx.recv().expect("worker exited during startup");
            pin_errors[index] = err;
        }

        let mut pool = ThreadPool {
            workers,
            done_rx,
            info: PoolInfo {
                core_ids: cores.ids().to_vec(),
                pinning,
                pinned: pin_errors
                    .iter()
                    .map(|e| pinning != Pinning::Off && e.is_none())
                    .collect(),
                pin_errors,
                clock,
                dispatch_latency_s: 0.0,
            },
            closed: false,
        };

        if pinning == Pinning::Strict {
            if let Some((i, err)) = pool
                .info
                .pin_errors
                .iter()
                .enumerate()
                .find_map(|(i, e)| e.as_ref().map(|e| (i, e.clone())))
            {
                let core_id = pool.info.core_ids[i];
                pool.shutdown();
                return Err(Error::PinningFailed {
                    core_id,
                    reason: err,
                });
            }
        }

        pool.info.dispatch_latency_s = pool.measure_dispatch_latency();
        Ok(pool)
    }

    fn measure_dispatch_latency(&self) -> f64 {
        let start = TimingClock::Monotonic.now();
        for w in &self.workers {
            let _ = w.tx.send(Message::Ping);
        }
        for _ in 0..self.workers.len() {
            let _ = self.done_rx.recv();
        }
        TimingClock::Monotonic.now() - start
    }

    pub fn len(&self) -> usize {
        self.info.core_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn info(&self) -> &PoolInfo {
        &self.info
    }

    pub fn clock(&self) -> TimingClock {
        self.info.clock
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Number of live worker threads.
    pub fn worker_count(&self) -> usize {
        self.workers.iter().filter(|w| !w.handle.is_finished()).count()
    }

    /// Runs every sub-task on its worker and waits for all of them.
    ///
    /// Elapsed time is measured on the worker around the work call only.
    /// Sub-tasks with empty ranges are not dispatched and record zero.
    pub fn execute(&mut self, subtasks: &[SubTask<'_>]) -> Result<TaskTiming> {
        if self.closed {
            return Err(Error::PoolClosed);
        }
        let n = self.len();
        let mut timing = TaskTiming::zeros(n);
        let mut seen = vec![false; n];
        for st in subtasks {
            if st.core_index >= n {
                return Err(Error::invalid(format!(
                    "sub-task core index {} >= pool size {n}",
                    st.core_index
                )));
            }
            if std::mem::replace(&mut seen[st.core_index], true) {
                return Err(Error::invalid(format!(
                    "more than one sub-task for core {}",
                    st.core_index
                )));
            }
            if st.range.start > st.range.end {
                return Err(Error::invalid(format!("inverted range {:?}", st.range)));
            }
        }

        let mut dispatched = 0;
        for st in subtasks.iter().filter(|st| !st.range.is_empty()) {
            let work: *const (dyn RangeKernel + '_) = st.work;
            // SAFETY: lifetime erasure only. Every dispatched job is awaited
            // below before this function returns, even on error paths.
            let work: *const (dyn RangeKernel + 'static) = unsafe { std::mem::transmute(work) };
            let job = Job {
                work,
                range: st.range.clone(),
            };
            if self.workers[st.core_index].tx.send(Message::Run(job)).is_err() {
                // Worker is gone; drain what was sent and bail.
                self.drain(dispatched);
                return Err(Error::TaskFailed {
                    core_index: st.core_index,
                    message: "worker thread exited".into(),
                });
            }
            timing.per_core_units[st.core_index] = st.range.len();
            dispatched += 1;
        }

        let mut failure: Option<Error> = None;
        for _ in 0..dispatched {
            let done = self
                .done_rx
                .recv()
                .expect("worker channel closed mid-launch");
            match done.outcome {
                Ok(elapsed) => timing.per_core_elapsed[done.core_index] = elapsed,
                Err(message) => {
                    let this = Error::TaskFailed {
                        core_index: done.core_index,
                        message,
                    };
                    // Keep the lowest core index for determinism.
                    failure = match failure {
                        Some(Error::TaskFailed { core_index, .. })
                            if core_index < done.core_index =>
                        {
                            failure
                        }
                        _ => Some(this),
                    };
                }
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(timing),
        }
    }

    fn drain(&self, count: usize) {
        for _ in 0..count {
            let _ = self.done_rx.recv();
        }
    }

    /// Joins all workers. Idempotent.
    pub fn shutdown(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        shutdown_workers(&mut self.workers);
    }
}

impl Drop for ThreadPool {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl std::fmt::Debug for ThreadPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThreadPool")
            .field("info", &self.info)
            .field("closed", &self.closed)
            .finish()
    }
}

fn shutdown_workers(workers: &mut Vec<Worker>) {
    for w in workers.drain(..) {
        drop(w.tx);
        let _ = w.handle.join();
    }
}

fn worker_loop(index: usize, clock: TimingClock, rx: Receiver<Message>, done: Sender<Done>) {
    for msg in rx {
        let outcome = match msg {
            Message::Ping => Ok(0.0),
            Message::Run(job) => {
                // SAFETY: see `Job`; the launcher is blocked until we report.
                let work = unsafe { &*job.work };
                let range = job.range;
                panic::catch_unwind(AssertUnwindSafe(|| {
                    let start = clock.now();
                    work.run(index, range);
                    clock.now() - start
                }))
                .map_err(panic_message)
            }
        };
        if done
            .send(Done {
                core_index: index,
                outcome,
            })
            .is_err()
        {
            break;
        }
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}
