//! C ABI over the hetpar runtime.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`HetparStatus`]; on failure [`hetpar_last_error`] describes the most
//! recent error on the calling thread.
//!
//! Vectors are passed as pointer + length. Output buffers are caller-owned
//! and must hold one element per core unless stated otherwise.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use hetpar::perf_table::raw_update;
use hetpar::{
    split, static_equal_split, CoreSet, Error, KernelClass, PerformanceTable, Pinning,
    RangeKernel, Scheduler, TaskTiming, ThreadPool, TimingClock,
};

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HetparStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    DegenerateTiming = 3,
    PinningFailed = 4,
    ResourceExhausted = 5,
    TaskFailed = 6,
    PoolClosed = 7,
    DimensionMismatch = 8,
    Internal = 99,
}

/// Affinity policy for [`hetpar_scheduler_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HetparPinning {
    Strict = 0,
    BestEffort = 1,
    Off = 2,
}

/// Timing source for [`hetpar_scheduler_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HetparClock {
    Monotonic = 0,
    ThreadCpu = 1,
}

/// Opaque performance table.
pub struct HetparTable {
    inner: Arc<PerformanceTable>,
}

/// Opaque scheduler: a pinned pool plus its performance table.
pub struct HetparScheduler {
    inner: Scheduler,
}

/// Range callback: computes units `[start, end)` on worker `core`.
///
/// Called concurrently from several worker threads with disjoint ranges.
pub type HetparRangeFn =
    Option<unsafe extern "C" fn(ctx: *mut c_void, core: usize, start: usize, end: usize)>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> HetparStatus {
    match err {
        Error::InvalidArgument(_)
        | Error::Parse { .. }
        | Error::CountMismatch { .. }
        | Error::InsufficientParticipants(_) => HetparStatus::InvalidArgument,
        Error::DegenerateTiming { .. } => HetparStatus::DegenerateTiming,
        Error::PinningFailed { .. } => HetparStatus::PinningFailed,
        Error::ResourceExhausted(_) => HetparStatus::ResourceExhausted,
        Error::TaskFailed { .. } => HetparStatus::TaskFailed,
        Error::PoolClosed => HetparStatus::PoolClosed,
        Error::DimensionMismatch(_) => HetparStatus::DimensionMismatch,
        _ => HetparStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HetparStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HetparStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            HetparStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("panic inside hetpar".into());
            HetparStatus::Internal
        }
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

unsafe fn slice_in<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_out<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn class_arg(class: *const c_char) -> Result<KernelClass, Fail> {
    if class.is_null() {
        return Err(Fail::Null("class"));
    }
    let s = CStr::from_ptr(class)
        .to_str()
        .map_err(|_| Error::InvalidArgument("class is not UTF-8".into()))?;
    Ok(KernelClass::new(s)?)
}

unsafe fn timing_arg(elapsed_s: *const f64, units: *const usize, n: usize) -> Result<TaskTiming, Fail> {
    Ok(TaskTiming {
        per_core_elapsed: slice_in(elapsed_s, n, "elapsed_s")?.to_vec(),
        per_core_units: slice_in(units, n, "units")?.to_vec(),
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hetpar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hetpar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a table with `n_cores` entries per kernel class.
#[no_mangle]
pub unsafe extern "C" fn hetpar_table_new(
    n_cores: usize,
    alpha: f64,
    initial_ratio: f64,
    out: *mut *mut HetparTable,
) -> HetparStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let table = PerformanceTable::new(n_cores, alpha, initial_ratio)?;
        *out = Box::into_raw(Box::new(HetparTable {
            inner: Arc::new(table),
        }));
        Ok(())
    })
}

/// Releases a table. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hetpar_table_free(table: *mut HetparTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Copies the current ratios for `class` into `out` (`n` = core count).
#[no_mangle]
pub unsafe extern "C" fn hetpar_table_get_ratios(
    table: *const HetparTable,
    class: *const c_char,
    out: *mut f64,
    n: usize,
) -> HetparStatus {
    guard(|| {
        let table = table.as_ref().ok_or(Fail::Null("table"))?;
        let class = class_arg(class)?;
        let out = slice_out(out, n, "out")?;
        let ratios = table.inner.get_ratios(&class);
        if ratios.len() != n {
            return Err(Error::DimensionMismatch(format!("buffer of {n} for {} cores", ratios.len())).into());
        }
        out.copy_from_slice(&ratios);
        Ok(())
    })
}

/// Applies one filtered update from caller-measured timings and writes the
/// new ratios to `out_ratios` (may be NULL).
#[no_mangle]
pub unsafe extern "C" fn hetpar_table_update(
    table: *const HetparTable,
    class: *const c_char,
    elapsed_s: *const f64,
    units: *const usize,
    n: usize,
    out_ratios: *mut f64,
) -> HetparStatus {
    guard(|| {
        let table = table.as_ref().ok_or(Fail::Null("table"))?;
        let class = class_arg(class)?;
        let timing = timing_arg(elapsed_s, units, n)?;
        let r = table.inner.filtered_update(&class, &timing)?;
        if !out_ratios.is_null() {
            slice_out(out_ratios, n, "out_ratios")?.copy_from_slice(&r);
        }
        Ok(())
    })
}

/// Unfiltered ratio update; a pure function of its inputs.
#[no_mangle]
pub unsafe extern "C" fn hetpar_raw_update(
    ratios: *const f64,
    elapsed_s: *const f64,
    units: *const usize,
    n: usize,
    out: *mut f64,
) -> HetparStatus {
    guard(|| {
        let ratios = slice_in(ratios, n, "ratios")?;
        let timing = timing_arg(elapsed_s, units, n)?;
        let r = raw_update(ratios, &timing)?;
        slice_out(out, n, "out")?.copy_from_slice(&r);
        Ok(())
    })
}

/// Proportional split of `total_units` into `out_partitions[n]`.
#[no_mangle]
pub unsafe extern "C" fn hetpar_split(
    total_units: usize,
    ratios: *const f64,
    n: usize,
    granularity: usize,
    out_partitions: *mut usize,
) -> HetparStatus {
    guard(|| {
        let plan = split(total_units, slice_in(ratios, n, "ratios")?, granularity)?;
        slice_out(out_partitions, n, "out_partitions")?.copy_from_slice(&plan.partitions);
        Ok(())
    })
}

/// Equal split of `total_units` across `n_cores`.
#[no_mangle]
pub unsafe extern "C" fn hetpar_static_equal_split(
    total_units: usize,
    n_cores: usize,
    granularity: usize,
    out_partitions: *mut usize,
) -> HetparStatus {
    guard(|| {
        let plan = static_equal_split(total_units, n_cores, granularity)?;
        slice_out(out_partitions, n_cores, "out_partitions")?.copy_from_slice(&plan.partitions);
        Ok(())
    })
}

/// Starts one worker per entry of `core_ids`.
#[no_mangle]
pub unsafe extern "C" fn hetpar_scheduler_new(
    core_ids: *const usize,
    n_cores: usize,
    pinning: HetparPinning,
    clock: HetparClock,
    alpha: f64,
    initial_ratio: f64,
    out: *mut *mut HetparScheduler,
) -> HetparStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let cores = CoreSet::new(slice_in(core_ids, n_cores, "core_ids")?.to_vec())?;
        let pinning = match pinning {
            HetparPinning::Strict => Pinning::Strict,
            HetparPinning::BestEffort => Pinning::BestEffort,
            HetparPinning::Off => Pinning::Off,
        };
        let clock = match clock {
            HetparClock::Monotonic => TimingClock::Monotonic,
            HetparClock::ThreadCpu => TimingClock::ThreadCpu,
        };
        let pool = ThreadPool::with_clock(cores, pinning, clock)?;
        let table = Arc::new(PerformanceTable::new(n_cores, alpha, initial_ratio)?);
        *out = Box::into_raw(Box::new(HetparScheduler {
            inner: Scheduler::new(pool, table)?,
        }));
        Ok(())
    })
}

/// Joins the workers and releases the scheduler. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hetpar_scheduler_free(sched: *mut HetparScheduler) {
    if !sched.is_null() {
        drop(Box::from_raw(sched));
    }
}

/// Number of workers.
#[no_mangle]
pub unsafe extern "C" fn hetpar_scheduler_cores(sched: *const HetparScheduler) -> usize {
    sched.as_ref().map_or(0, |s| s.inner.n_cores())
}

/// Writes per-worker pinning success (1/0) into `out[n]`.
#[no_mangle]
pub unsafe extern "C" fn hetpar_scheduler_pinned(
    sched: *const HetparScheduler,
    out: *mut u8,
    n: usize,
) -> HetparStatus {
    guard(|| {
        let s = sched.as_ref().ok_or(Fail::Null("sched"))?;
        let pinned = &s.inner.pool().info().pinned;
        if pinned.len() != n {
            return Err(Error::DimensionMismatch(format!("buffer of {n} for {} cores", pinned.len())).into());
        }
        for (o, p) in slice_out(out, n, "out")?.iter_mut().zip(pinned) {
            *o = *p as u8;
        }
        Ok(())
    })
}

/// Copies the scheduler's ratios for `class` into `out[n]`.
#[no_mangle]
pub unsafe extern "C" fn hetpar_scheduler_get_ratios(
    sched: *const HetparScheduler,
    class: *const c_char,
    out: *mut f64,
    n: usize,
) -> HetparStatus {
    guard(|| {
        let s = sched.as_ref().ok_or(Fail::Null("sched"))?;
        let class = class_arg(class)?;
        let ratios = s.inner.table().get_ratios(&class);
        if ratios.len() != n {
            return Err(Error::DimensionMismatch(format!("buffer of {n} for {} cores", ratios.len())).into());
        }
        slice_out(out, n, "out")?.copy_from_slice(&ratios);
        Ok(())
    })
}

struct CallbackKernel {
    f: unsafe extern "C" fn(*mut c_void, usize, usize, usize),
    ctx: *mut c_void,
    granularity: usize,
}

// SAFETY: the caller of `hetpar_scheduler_run` guarantees the callback and
// its context are safe to use from several threads on disjoint ranges.
unsafe impl Sync for CallbackKernel {}

impl RangeKernel for CallbackKernel {
    fn run(&self, core: usize, range: Range<usize>) {
        // SAFETY: see the `Sync` impl.
        unsafe { (self.f)(self.ctx, core, range.start, range.end) }
    }

    fn granularity(&self) -> usize {
        self.granularity
    }
}

/// One proportional launch of `kernel` over `total_units`.
///
/// Each of the `n`-element output buffers may be NULL. When `update` is
/// nonzero the ratios for `class` are re-estimated from the timings.
#[no_mangle]
pub unsafe extern "C" fn hetpar_scheduler_run(
    sched: *mut HetparScheduler,
    class: *const c_char,
    total_units: usize,
    granularity: usize,
    kernel: HetparRangeFn,
    ctx: *mut c_void,
    update: i32,
    out_partitions: *mut usize,
    out_elapsed_s: *mut f64,
    out_ratios: *mut f64,
    out_makespan_s: *mut f64,
) -> HetparStatus {
    guard(|| {
        let s = sched.as_mut().ok_or(Fail::Null("sched"))?;
        let class = class_arg(class)?;
        let f = kernel.ok_or(Fail::Null("kernel"))?;
        let k = CallbackKernel {
            f,
            ctx,
            granularity,
        };
        let rep = s.inner.run_kernel(&class, total_units, &k, update != 0)?;
        let n = s.inner.n_cores();
        if !out_partitions.is_null() {
            slice_out(out_partitions, n, "out_partitions")?.copy_from_slice(&rep.plan.partitions);
        }
        if !out_elapsed_s.is_null() {
            slice_out(out_elapsed_s, n, "out_elapsed_s")?.copy_from_slice(&rep.timing.per_core_elapsed);
        }
        if !out_ratios.is_null() {
            slice_out(out_ratios, n, "out_ratios")?.copy_from_slice(&rep.updated_ratios);
        }
        if let Some(m) = out_makespan_s.as_mut() {
            *m = rep.makespan;
        }
        Ok(())
    })
}
