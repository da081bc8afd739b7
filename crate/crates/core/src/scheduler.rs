//! Proportional splitting and the per-launch dispatch/measure/update loop.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::perf_table::{KernelClass, PerformanceTable, TaskTiming};
use crate::pool::{RangeKernel, SubTask, ThreadPool};
use crate::{Error, Result};

/// Per-core unit counts for one launch, laid out contiguously by core index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub total_units: usize,
    pub granularity: usize,
    pub partitions: Vec<usize>,
}

impl SplitPlan {
    /// Half-open unit range of each core, in core order.
    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.partitions
            .iter()
            .map(|&n| {
                let r = start..start + n;
                start += n;
                r
            })
            .collect()
    }

    pub fn n_cores(&self) -> usize {
        self.partitions.len()
    }
}

/// Splits `total_units` in proportion to `ratios`, in whole chunks of
/// `granularity` units.
///
/// The work is viewed as `ceil(total / g)` chunks. Each core's chunk target
/// is its share of the ratio sum; targets are floored and the leftover chunks
/// go one at a time to the largest fractional remainders (ties to the lower
/// index). The last non-empty partition gives back the overshoot from the
/// final short chunk. With fewer chunks than cores every floor is zero, so
/// the chunks land on the highest-ratio cores.
pub fn split(total_units: usize, ratios: &[f64], granularity: usize) -> Result<SplitPlan> {
    if granularity == 0 {
        return Err(Error::invalid("granularity must be at least 1"));
    }
    if ratios.is_empty() {
        return Err(Error::invalid("ratio vector is empty"));
    }
    if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::invalid(format!("ratio {bad} is not positive")));
    }

    let n = ratios.len();
    let g = granularity;
    let chunks = total_units.div_ceil(g);
    let mut counts = vec![0usize; n];

    let sum: f64 = ratios.iter().sum();
    let targets: Vec<f64> = ratios.iter().map(|&r| r * chunks as f64 / sum).collect();
    let mut assigned = 0;
    for (c, t) in counts.iter_mut().zip(&targets) {
        *c = (t.floor() as usize).min(chunks);
        assigned += *c;
    }
    // Float rounding can push the floors past the chunk count.
    while assigned > chunks {
        let i = (0..n)
            .filter(|&i| counts[i] > 0)
            .min_by(|&a, &b| {
                (targets[a] - counts[a] as f64).total_cmp(&(targets[b] - counts[b] as f64))
            })
            .expect("non-empty");
        counts[i] -= 1;
        assigned -= 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - counts[a] as f64;
        let fb = targets[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(chunks - assigned) {
        counts[i] += 1;
    }

    let mut partitions: Vec<usize> = counts.iter().map(|&c| c * g).collect();
    let overshoot = chunks * g - total_units;
    if overshoot > 0 {
        let last = partitions
            .iter()
            .rposition(|&p| p > 0)
            .expect("a non-empty split has a non-empty partition");
        partitions[last] -= overshoot;
    }

    Ok(SplitPlan {
        total_units,
        granularity,
        partitions,
    })
}

/// Equal split across `n_cores`; the baseline every dynamic run is compared
/// against.
pub fn static_equal_split(total_units: usize, n_cores: usize, granularity: usize) -> Result<SplitPlan> {
    if n_cores == 0 {
        return Err(Error::invalid("n_cores must be at least 1"));
    }
    split(total_units, &vec![1.0; n_cores], granularity)
}

/// Everything observed about one launch.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelLaunchReport {
    pub class: KernelClass,
    pub timing: TaskTiming,
    pub plan: SplitPlan,
    /// Ratios after the launch; equal to the ratios used when no update ran.
    pub updated_ratios: Vec<f64>,
    pub makespan: f64,
    /// Whether the table was updated by this launch.
    pub updated: bool,
    /// Set when an update was requested but the round did not qualify.
    pub update_skipped: Option<String>,
}

/// Fixed-schema JSON record of a launch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchRecord {
    pub class: String,
    pub total_units: usize,
    pub partitions: Vec<usize>,
    pub elapsed_s: Vec<f64>,
    pub makespan_s: f64,
    pub ratios_after: Vec<f64>,
}

impl KernelLaunchReport {
    pub fn record(&self) -> LaunchRecord {
        LaunchRecord {
            class: self.class.to_string(),
            total_units: self.plan.total_units,
            partitions: self.plan.partitions.clone(),
            elapsed_s: self.timing.per_core_elapsed.clone(),
            makespan_s: self.makespan,
            ratios_after: self.updated_ratios.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("launch record serializes")
    }
}

/// Owns a pool and is the only writer of its performance table.
#[derive(Debug)]
pub struct Scheduler {
    pool: ThreadPool,
    table: Arc<PerformanceTable>,
}

impl Scheduler {
    pub fn new(pool: ThreadPool, table: Arc<PerformanceTable>) -> Result<Self> {
        if pool.len() != table.n_cores() {
            return Err(Error::DimensionMismatch(format!(
                "pool has {} workers, table has {} cores",
                pool.len(),
                table.n_cores()
            )));
        }
        Ok(Scheduler { pool, table })
    }

    pub fn pool(&self) -> &ThreadPool {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut ThreadPool {
        &mut self.pool
    }

    pub fn table(&self) -> &Arc<PerformanceTable> {
        &self.table
    }

    pub fn n_cores(&self) -> usize {
        self.pool.len()
    }

    /// Splits by the current ratios of `class`, runs, and (if `update`)
    /// feeds the timings back into the table.
    pub fn run_kernel(
        &mut self,
        class: &KernelClass,
        total_units: usize,
        kernel: &dyn RangeKernel,
        update: bool,
    ) -> Result<KernelLaunchReport> {
        let ratios = self.table.get_ratios(class);
        let plan = split(total_units, &ratios, kernel.granularity())?;
        self.run_plan(class, plan, kernel, update)
    }

    /// Equal-split launch that never touches the table.
    pub fn run_static(
        &mut self,
        class: &KernelClass,
        total_units: usize,
        kernel: &dyn RangeKernel,
    ) -> Result<KernelLaunchReport> {
        let plan = static_equal_split(total_units, self.n_cores(), kernel.granularity())?;
        self.run_plan(class, plan, kernel, false)
    }

    /// Runs an explicit plan.
    pub fn run_plan(
        &mut self,
        class: &KernelClass,
        plan: SplitPlan,
        kernel: &dyn RangeKernel,
        update: bool,
    ) -> Result<KernelLaunchReport> {
        if plan.n_cores() != self.n_cores() {
            return Err(Error::DimensionMismatch(format!(
                "plan has {} partitions for {} cores",
                plan.n_cores(),
                self.n_cores()
            )));
        }
        let subtasks: Vec<SubTask<'_>> = plan
            .ranges()
            .into_iter()
            .enumerate()
            .map(|(i, r)| SubTask::new(i, r, kernel))
            .collect();
        let timing = self.pool.execute(&subtasks)?;
        let makespan = timing.makespan();

        let mut updated = false;
        let mut update_skipped = None;
        let updated_ratios = if update {
            let participants = timing.participants().count();
            if participants < 2 {
                update_skipped = Some(format!("{participants} participating core(s)"));
                self.table.get_ratios(class)
            } else {
                match self.table.filtered_update(class, &timing) {
                    Ok(r) => {
                        updated = true;
                        r
                    }
                    Err(e @ Error::DegenerateTiming { .. }) => {
                        update_skipped = Some(e.to_string());
                        self.table.get_ratios(class)
                    }
                    Err(e) => return Err(e),
                }
            }
        } else {
            self.table.get_ratios(class)
        };

        Ok(KernelLaunchReport {
            class: class.clone(),
            timing,
            plan,
            updated_ratios,
            makespan,
            updated,
            update_skipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{CoreSet, Pinning};

    fn parts(total: usize, ratios: &[f64], g: usize) -> Vec<usize> {
        split(total, ratios, g).unwrap().partitions
    }

    #[test]
    fn split_examples() {
        assert_eq!(parts(1024, &[1.0; 4], 1), vec![256; 4]);
        assert_eq!(parts(4096, &[3.0, 1.0], 1), vec![3072, 1024]);
        assert_eq!(parts(10, &[1.0; 3], 1), vec![4, 3, 3]);
        assert_eq!(parts(7, &[1.0; 4], 4), vec![4, 3, 0, 0]);
    }

    #[test]
    fn static_split_examples() {
        let p = |s, n, g| static_equal_split(s, n, g).unwrap().partitions;
        assert_eq!(p(4096, 4, 1), vec![1024; 4]);
        assert_eq!(p(4097, 4, 1), vec![1025, 1024, 1024, 1024]);
        assert_eq!(p(100, 3, 32), vec![64, 32, 4]);
    }

    #[test]
    fn few_chunks_go_to_fastest_cores() {
        assert_eq!(parts(2, &[1.0, 5.0, 2.0], 1), vec![0, 1, 1]);
        assert_eq!(parts(6, &[1.0, 5.0, 2.0], 4), vec![0, 4, 2]);
        assert_eq!(parts(2, &[10.0, 1.0, 1.0], 1), vec![2, 0, 0]);
        assert_eq!(parts(0, &[1.0, 2.0], 4), vec![0, 0]);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split(10, &[1.0, 0.0], 1).is_err());
        assert!(split(10, &[1.0, -1.0], 1).is_err());
        assert!(split(10, &[1.0, f64::NAN], 1).is_err());
        assert!(split(10, &[1.0], 0).is_err());
        assert!(split(10, &[], 1).is_err());
        assert!(static_equal_split(10, 0, 1).is_err());
    }

    #[test]
    fn ranges_are_contiguous() {
        let plan = split(10, &[1.0; 3], 1).unwrap();
        assert_eq!(plan.ranges(), vec![0..4, 4..7, 7..10]);
    }

    fn scheduler(n: usize) -> Scheduler {
        let pool = ThreadPool::new(CoreSet::first_n(n).unwrap(), Pinning::Off).unwrap();
        let table = Arc::new(PerformanceTable::new(n, 0.3, 1.0).unwrap());
        Scheduler::new(pool, table).unwrap()
    }

    #[test]
    fn zero_units_launch() {
        let mut s = scheduler(3);
        let class = KernelClass::new("copy").unwrap();
        let k = |_c: usize, _r: Range<usize>| {};
        let rep = s.run_kernel(&class, 0, &k, true).unwrap();
        assert_eq!(rep.plan.partitions, vec![0, 0, 0]);
        assert_eq!(rep.makespan, 0.0);
        assert!(!rep.updated);
        assert!(s.table().classes().is_empty());
    }

    #[test]
    fn measurement_only_mode_leaves_ratios() {
        let mut s = scheduler(2);
        let class = KernelClass::new("k").unwrap();
        let k = |c: usize, r: Range<usize>| {
            let mut acc = 0u64;
            for i in 0..r.len() * (c + 1) * 200 {
                acc = acc.wrapping_add(std::hint::black_box(i as u64));
            }
            std::hint::black_box(acc);
        };
        for _ in 0..100 {
            let rep = s.run_kernel(&class, 64, &k, false).unwrap();
            assert_eq!(rep.updated_ratios, vec![1.0, 1.0]);
        }
        assert!(s.table().classes().is_empty());
    }

    #[test]
    fn report_json_has_fixed_fields() {
        let mut s = scheduler(2);
        let class = KernelClass::new("copy").unwrap();
        let k = |_c: usize, _r: Range<usize>| {};
        let json = s.run_kernel(&class, 8, &k, false).unwrap().to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["class", "elapsed_s", "makespan_s", "partitions", "ratios_after", "total_units"]
        );
        assert_eq!(v["partitions"], serde_json::json!([4, 4]));
    }

    #[test]
    fn mismatched_table_rejected() {
        let pool = ThreadPool::new(CoreSet::first_n(2).unwrap(), Pinning::Off).unwrap();
        let table = Arc::new(PerformanceTable::new(3, 0.3, 1.0).unwrap());
        assert!(Scheduler::new(pool, table).is_err());
    }
}
