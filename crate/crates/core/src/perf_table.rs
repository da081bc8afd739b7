//! Per-core relative performance ratios, one vector per kernel class.
//!
//! Ratios are kept on a mean-1 scale: a freshly materialized vector is all
//! ones, and every update re-normalizes so the mean stays 1. Splitting only
//! depends on ratios up to a common factor, so the scale is a convention
//! that keeps traces comparable across core counts.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::clock::CLOCK_EPSILON_S;
use crate::{Error, Result};

/// Default EMA filter gain.
pub const DEFAULT_ALPHA: f64 = 0.3;

/// Lower clamp applied to every filtered ratio before normalization. Keeps a
/// core that stalled once from being starved of work (and thus of any
/// timing signal) forever.
pub const RATIO_FLOOR: f64 = 0.01;

/// Label for a group of kernels that share a dominant instruction mix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelClass(String);

impl KernelClass {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("kernel class id must be non-empty"));
        }
        Ok(KernelClass(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for KernelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for KernelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelClass::new(s)
    }
}

/// Per-core timing of one launch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskTiming {
    /// Elapsed seconds per core; zero for cores that received no work.
    pub per_core_elapsed: Vec<f64>,
    /// Work units assigned per core.
    pub per_core_units: Vec<usize>,
}

impl TaskTiming {
    pub fn zeros(n_cores: usize) -> Self {
        TaskTiming {
            per_core_elapsed: vec![0.0; n_cores],
            per_core_units: vec![0; n_cores],
        }
    }

    pub fn n_cores(&self) -> usize {
        self.per_core_elapsed.len()
    }

    /// Indices of cores that received work.
    pub fn participants(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_core_units
            .iter()
            .enumerate()
            .filter(|(_, &u)| u > 0)
            .map(|(i, _)| i)
    }

    /// Slowest participant's elapsed time.
    pub fn makespan(&self) -> f64 {
        self.per_core_elapsed.iter().copied().fold(0.0, f64::max)
    }
}

/// Scales `v` in place to mean 1.
fn normalize_mean_one(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for r in v.iter_mut() {
        *r /= mean;
    }
}

/// One application of the ratio update without filtering.
///
/// For participating cores the new ratio is proportional to the observed
/// speed `pr_i / t_i`, rescaled so the participants average 1. Cores with no
/// assigned units keep their prior ratio.
pub fn raw_update(ratios: &[f64], timing: &TaskTiming) -> Result<Vec<f64>> {
    if timing.per_core_elapsed.len() != ratios.len() || timing.per_core_units.len() != ratios.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "{} ratios vs {} elapsed / {} units",
            ratios.len(),
            timing.per_core_elapsed.len(),
            timing.per_core_units.len()
        )));
    }
    if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::invalid(format!("ratio {bad} is not positive")));
    }

    let participants: Vec<usize> = timing.participants().collect();
    if participants.len() < 2 {
        return Err(Error::InsufficientParticipants(participants.len()));
    }
    for &i in &participants {
        let t = timing.per_core_elapsed[i];
        if t.is_nan() || t <= CLOCK_EPSILON_S || !t.is_finite() {
            return Err(Error::DegenerateTiming {
                core: i,
                elapsed_s: t,
            });
        }
    }

    let speed_sum: f64 = participants
        .iter()
        .map(|&j| ratios[j] / timing.per_core_elapsed[j])
        .sum();
    let scale = participants.len() as f64 / speed_sum;

    let mut out = ratios.to_vec();
    for &i in &participants {
        out[i] = ratios[i] / timing.per_core_elapsed[i] * scale;
    }
    Ok(out)
}

/// Ratio vectors keyed by kernel class.
///
/// Updates take a write lock and are expected only between launches; reads
/// may come from any thread.
#[derive(Debug)]
pub struct PerformanceTable {
    n_cores: usize,
    alpha: f64,
    initial_ratio: f64,
    ratios: RwLock<HashMap<KernelClass, Vec<f64>>>,
}

impl PerformanceTable {
    pub fn new(n_cores: usize, alpha: f64, initial_ratio: f64) -> Result<Self> {
        if n_cores == 0 {
            return Err(Error::invalid("n_cores must be at least 1"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        if !(initial_ratio > 0.0 && initial_ratio.is_finite()) {
            return Err(Error::invalid(format!(
                "initial ratio {initial_ratio} must be positive"
            )));
        }
        Ok(PerformanceTable {
            n_cores,
            alpha,
            initial_ratio,
            ratios: RwLock::new(HashMap::new()),
        })
    }

    pub fn n_cores(&self) -> usize {
        self.n_cores
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn initial_ratio(&self) -> f64 {
        self.initial_ratio
    }

    fn default_vector(&self) -> Vec<f64> {
        let mut v = vec![self.initial_ratio; self.n_cores];
        normalize_mean_one(&mut v);
        v
    }

    /// Current ratios for `class`; unseen classes read as the default vector.
    pub fn get_ratios(&self, class: &KernelClass) -> Vec<f64> {
        let map = self.ratios.read().unwrap_or_else(|e| e.into_inner());
        map.get(class)
            .cloned()
            .unwrap_or_else(|| self.default_vector())
    }

    /// Kernel classes that have been updated at least once, sorted.
    pub fn classes(&self) -> Vec<KernelClass> {
        let map = self.ratios.read().unwrap_or_else(|e| e.into_inner());
        let mut classes: Vec<_> = map.keys().cloned().collect();
        classes.sort();
        classes
    }

    /// Applies [`raw_update`], blends with the stored vector using the filter
    /// gain, floors, re-normalizes, stores and returns the result.
    ///
    /// On error the stored vector is left as it was.
    pub fn filtered_update(&self, class: &KernelClass, timing: &TaskTiming) -> Result<Vec<f64>> {
        let mut map = self.ratios.write().unwrap_or_else(|e| e.into_inner());
        let old = map
            .get(class)
            .cloned()
            .unwrap_or_else(|| self.default_vector());
        let fresh = raw_update(&old, timing)?;

        let a = self.alpha;
        let mut blended: Vec<f64> = old
            .iter()
            .zip(&fresh)
            .map(|(&o, &n)| (a * o + (1.0 - a) * n).max(RATIO_FLOOR))
            .collect();
        normalize_mean_one(&mut blended);

        map.insert(class.clone(), blended.clone());
        Ok(blended)
    }

    /// Overwrites the vector for `class`, normalized to mean 1.
    pub fn set_ratios(&self, class: &KernelClass, ratios: &[f64]) -> Result<()> {
        if ratios.len() != self.n_cores {
            return Err(Error::DimensionMismatch(format!(
                "{} ratios for a {}-core table",
                ratios.len(),
                self.n_cores
            )));
        }
        if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("ratios must be positive"));
        }
        let mut v = ratios.to_vec();
        normalize_mean_one(&mut v);
        self.ratios
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(class.clone(), v);
        Ok(())
    }
}

/// Snapshot rows of ratio vectors, one per update, serialized as
/// `iteration,kernel_class,core_0..core_{n-1}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatioTrace {
    n_cores: usize,
    rows: Vec<(usize, KernelClass, Vec<f64>)>,
}

impl RatioTrace {
    pub fn new(n_cores: usize) -> Self {
        RatioTrace {
            n_cores,
            rows: Vec::new(),
        }
    }

    pub fn record(&mut self, iteration: usize, class: &KernelClass, ratios: &[f64]) {
        debug_assert_eq!(ratios.len(), self.n_cores);
        self.rows.push((iteration, class.clone(), ratios.to_vec()));
    }

    pub fn rows(&self) -> &[(usize, KernelClass, Vec<f64>)] {
        &self.rows
    }

    pub fn header(&self) -> String {
        let mut h = String::from("iteration,kernel_class");
        for i in 0..self.n_cores {
            let _ = write!(h, ",core_{i}");
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for (iteration, class, ratios) in &self.rows {
            let _ = write!(out, "{iteration},{class}");
            for r in ratios {
                let _ = write!(out, ",{r:.6}");
            }
            out.push('\n');
        }
        out
    }
}
