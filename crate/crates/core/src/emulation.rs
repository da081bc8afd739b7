//! Manufactured core heterogeneity.
//!
//! A slowdown factor `f` makes a core look `1/f` as fast: the real work runs
//! and is timed, then the worker busy-waits `(f - 1)` times that long on the
//! same clock. Outputs are untouched.
//!
//! A share is dilated in pieces (work, wait, work, wait, ...) rather than
//! once at the end, so a slow core is slow throughout its share. When
//! workers time-share a CPU this keeps every core's work spread over the
//! same wall-clock window, and host speed drift affects all cores alike.

use std::ops::Range;

use crate::clock::{spin_until, TimingClock};
use crate::pool::RangeKernel;
use crate::{Error, Result};

/// Per-core slowdown factors, each `>= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreProfile(Vec<f64>);

impl CoreProfile {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("profile must have at least one factor"));
        }
        if let Some(f) = factors.iter().find(|f| !(**f >= 1.0 && f.is_finite())) {
            return Err(Error::invalid(format!("slowdown factor {f} must be >= 1")));
        }
        Ok(CoreProfile(factors))
    }

    pub fn uniform(n_cores: usize) -> Self {
        CoreProfile(vec![1.0; n_cores])
    }

    /// Parses `"1,1,3,3"` or the `count x factor` shorthand `"2x1,2x3"`.
    pub fn parse(spec: &str, n_cores: usize) -> Result<Self> {
        let mut factors = Vec::new();
        let mut pos = 0;
        for tok in spec.split(',') {
            let t = tok.trim();
            let offset = pos + (tok.len() - tok.trim_start().len());
            let parse_factor = |s: &str, at: usize| -> Result<f64> {
                let f: f64 = s.trim().parse().map_err(|_| Error::Parse {
                    position: at,
                    message: format!("invalid slowdown factor '{s}'"),
                })?;
                if !(f >= 1.0 && f.is_finite()) {
                    return Err(Error::Parse {
                        position: at,
                        message: format!("slowdown factor {f} must be >= 1"),
                    });
                }
                Ok(f)
            };
            if let Some((count, factor)) = t.split_once(['x', 'X']) {
                let n: usize = count.trim().parse().map_err(|_| Error::Parse {
                    position: offset,
                    message: format!("invalid repeat count '{count}'"),
                })?;
                let f = parse_factor(factor, offset + count.len() + 1)?;
                factors.extend(std::iter::repeat_n(f, n));
            } else {
                factors.push(parse_factor(t, offset)?);
            }
            pos += tok.len() + 1;
        }
        if factors.len() != n_cores {
            return Err(Error::CountMismatch {
                expected: n_cores,
                got: factors.len(),
            });
        }
        Ok(CoreProfile(factors))
    }

    pub fn factors(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Returns the profile with every factor multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        CoreProfile::new(self.0.iter().map(|f| f * c).collect())
    }
}

/// Runs `work` and then stretches its observed duration by `factor`.
pub fn dilate<R>(factor: f64, clock: TimingClock, work: impl FnOnce() -> R) -> R {
    let start = clock.now();
    let out = work();
    if factor > 1.0 {
        let e = clock.now() - start;
        spin_until(clock, start + factor * e);
    }
    out
}

/// Number of pieces a dilated share is cut into.
pub const DILATION_PIECES: usize = 32;

/// Splits `range` into at most `pieces` consecutive sub-ranges whose
/// boundaries are multiples of `granularity` past the start.
pub fn pieces(range: Range<usize>, granularity: usize, pieces: usize) -> impl Iterator<Item = Range<usize>> {
    let g = granularity.max(1);
    let step = range.len().div_ceil(pieces.max(1)).div_ceil(g).max(1) * g;
    let end = range.end;
    range.step_by(step).map(move |s| s..(s + step).min(end))
}

fn dilate_range(factor: f64, clock: TimingClock, range: Range<usize>, granularity: usize, work: impl Fn(Range<usize>)) {
    if range.is_empty() {
        return;
    }
    if factor <= 1.0 {
        work(range);
        return;
    }
    for piece in pieces(range, granularity, DILATION_PIECES) {
        dilate(factor, clock, || work(piece));
    }
}

/// Single-core decoration of range work, for callers outside the scheduler.
pub fn wrap_kernel<F>(work: F, profile: &CoreProfile, core_index: usize, clock: TimingClock) -> impl Fn(Range<usize>)
where
    F: Fn(Range<usize>),
{
    let factor = profile.factors()[core_index];
    move |r: Range<usize>| dilate_range(factor, clock, r, 1, &work)
}

/// A kernel decorated with a profile; each core's share is dilated by its
/// own factor.
pub struct EmulatedKernel<'a> {
    inner: &'a dyn RangeKernel,
    profile: &'a CoreProfile,
    clock: TimingClock,
}

impl<'a> EmulatedKernel<'a> {
    pub fn new(inner: &'a dyn RangeKernel, profile: &'a CoreProfile, clock: TimingClock) -> Self {
        EmulatedKernel {
            inner,
            profile,
            clock,
        }
    }
}

impl RangeKernel for EmulatedKernel<'_> {
    fn run(&self, core: usize, range: Range<usize>) {
        let factor = self.profile.factors()[core];
        dilate_range(factor, self.clock, range, self.inner.granularity(), |r| {
            self.inner.run(core, r)
        });
    }

    fn granularity(&self) -> usize {
        self.inner.granularity()
    }
}

/// Profiles installed at given launch indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSchedule {
    /// Sorted by launch index; the first entry starts at 0.
    entries: Vec<(usize, CoreProfile)>,
}

impl ProfileSchedule {
    pub fn constant(profile: CoreProfile) -> Self {
        ProfileSchedule {
            entries: vec![(0, profile)],
        }
    }

    /// Parses `"<factors>@<iteration>[,<factors>@<iteration>...]"`, e.g.
    /// `"1,1,3,3@0,1,1,1,1@40"`. A bare `"<factors>"` applies from launch 0.
    /// Launches before the first listed index run at native speed.
    pub fn parse(text: &str, n_cores: usize) -> Result<Self> {
        let pieces: Vec<&str> = text.split('@').collect();
        if pieces.len() == 1 {
            return Ok(Self::constant(CoreProfile::parse(text, n_cores)?));
        }
        let mut entries = Vec::new();
        let mut spec = pieces[0];
        let mut spec_pos = 0;
        let mut pos = pieces[0].len() + 1;
        for (i, piece) in pieces.iter().enumerate().skip(1) {
            let last = i == pieces.len() - 1;
            let (iter_text, next_spec) = if last {
                (*piece, None)
            } else {
                let (a, b) = piece.split_once(',').ok_or_else(|| Error::Parse {
                    position: pos,
                    message: "expected ',' after iteration index".into(),
                })?;
                (a, Some(b))
            };
            let at: usize = iter_text.trim().parse().map_err(|_| Error::Parse {
                position: pos,
                message: format!("invalid iteration index '{iter_text}'"),
            })?;
            let profile = CoreProfile::parse(spec, n_cores).map_err(|e| match e {
                Error::Parse { position, message } => Error::Parse {
                    position: spec_pos + position,
                    message,
                },
                other => other,
            })?;
            if let Some((prev, _)) = entries.last() {
                if at <= *prev {
                    return Err(Error::Parse {
                        position: pos,
                        message: format!("iteration {at} is not after {prev}"),
                    });
                }
            }
            entries.push((at, profile));
            if let Some(s) = next_spec {
                spec_pos = pos + iter_text.len() + 1;
                spec = s;
            }
            pos += piece.len() + 1;
        }
        if entries[0].0 != 0 {
            entries.insert(0, (0, CoreProfile::uniform(n_cores)));
        }
        Ok(ProfileSchedule { entries })
    }

    /// Profile in effect at launch `iteration`.
    pub fn profile_at(&self, iteration: usize) -> &CoreProfile {
        &self
            .entries
            .iter()
            .rev()
            .find(|(at, _)| *at <= iteration)
            .expect("schedule starts at 0")
            .1
    }

    pub fn entries(&self) -> &[(usize, CoreProfile)] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces_cover_range_on_granule_boundaries() {
        let p: Vec<_> = pieces(10..110, 4, 16).collect();
        assert_eq!(p.first().unwrap().start, 10);
        assert_eq!(p.last().unwrap().end, 110);
        assert!(p.len() <= 16);
        for w in p.windows(2) {
            assert_eq!(w[0].end, w[1].start);
            assert_eq!((w[0].end - 10) % 4, 0);
        }
        assert_eq!(pieces(0..3, 4, 16).collect::<Vec<_>>(), vec![0..3]);
        assert_eq!(pieces(5..5, 1, 16).count(), 0);
        assert_eq!(pieces(0..32, 1, 16).count(), 16);
    }

    #[test]
    fn parse_plain_and_shorthand() {
        assert_eq!(CoreProfile::parse("1,1,3,3", 4).unwrap().factors(), &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(CoreProfile::parse("2x1,2x3", 4).unwrap().factors(), &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(CoreProfile::parse("1, 2x2.5", 3).unwrap().factors(), &[1.0, 2.5, 2.5]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            CoreProfile::parse("1,1", 4),
            Err(Error::CountMismatch { expected: 4, got: 2 })
        ));
        let err = CoreProfile::parse("1,abc,3", 3).unwrap_err();
        assert!(matches!(err, Error::Parse { position: 2, .. }), "{err}");
        let err = CoreProfile::parse("1,0.5", 2).unwrap_err();
        assert!(matches!(err, Error::Parse { position: 2, .. }), "{err}");
        assert!(CoreProfile::new(vec![0.9]).is_err());
    }

    #[test]
    fn schedule_parsing() {
        let s = ProfileSchedule::parse("1,1,3,3@0,1,1,1,1@40", 4).unwrap();
        assert_eq!(s.profile_at(0).factors(), &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(s.profile_at(39).factors(), &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(s.profile_at(40).factors(), &[1.0; 4]);
        assert_eq!(s.profile_at(1000).factors(), &[1.0; 4]);

        let s = ProfileSchedule::parse("2x3@10", 2).unwrap();
        assert_eq!(s.profile_at(9).factors(), &[1.0, 1.0]);
        assert_eq!(s.profile_at(10).factors(), &[3.0, 3.0]);

        let s = ProfileSchedule::parse("1,2", 2).unwrap();
        assert_eq!(s.entries().len(), 1);

        assert!(ProfileSchedule::parse("1,1@5,1,2@3", 2).is_err());
        assert!(ProfileSchedule::parse("1,1@x", 2).is_err());
        assert!(ProfileSchedule::parse("1,1@0,1@4", 2).is_err());
    }

    #[test]
    fn dilation_stretches_elapsed() {
        let clock = TimingClock::ThreadCpu;
        let work = || {
            let t = clock.now();
            spin_until(clock, t + 0.005);
        };
        let start = clock.now();
        dilate(3.0, clock, work);
        let observed = clock.now() - start;
        assert!((0.015..0.0165).contains(&observed), "{observed}");
    }

    #[test]
    fn wrapped_work_produces_same_result() {
        use std::cell::Cell;
        let profile = CoreProfile::new(vec![1.0, 2.0]).unwrap();
        let sum = Cell::new(0usize);
        let f = wrap_kernel(|r: Range<usize>| sum.set(sum.get() + r.sum::<usize>()), &profile, 1, TimingClock::Monotonic);
        f(0..10);
        f(5..5);
        assert_eq!(sum.get(), 45);
    }
}
