use std::ops::Range;
use std::sync::Arc;

use hetpar::clock::spin_until;
use hetpar::emulation::{dilate, wrap_kernel};
use hetpar::kernels::{I8Gemm, I8GemmKernel};
use hetpar::{
    CoreProfile, CoreSet, EmulatedKernel, KernelClass, Pinning, PerformanceTable, ProfileSchedule,
    RangeKernel, Scheduler, SubTask, ThreadPool, TimingClock,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORK_S: f64 = 0.005;

fn spin_work(clock: TimingClock) -> impl Fn(usize, Range<usize>) + Sync {
    move |_c, _r| spin_until(clock, clock.now() + WORK_S)
}

fn timed(clock: TimingClock, f: impl FnOnce()) -> f64 {
    let t0 = clock.now();
    f();
    clock.now() - t0
}

#[test]
fn unit_factor_is_identity() {
    let clock = TimingClock::for_workers(2);
    let work = spin_work(clock);
    let e = timed(clock, || dilate(1.0, clock, || work(0, 0..1)));
    assert!((WORK_S..WORK_S * 1.2).contains(&e), "elapsed {e}");
    assert_eq!(dilate(1.0, clock, || 41 + 1), 42);
}

#[test]
fn factor_three_triples_elapsed() {
    let clock = TimingClock::for_workers(2);
    let work = spin_work(clock);
    for _ in 0..5 {
        let e = timed(clock, || dilate(3.0, clock, || work(0, 0..1)));
        assert!(
            (2.85 * WORK_S..=3.3 * WORK_S).contains(&e),
            "elapsed {e} outside [2.85e, 3.3e]"
        );
    }
    let profile = CoreProfile::new(vec![1.0, 3.0]).unwrap();
    let slow = wrap_kernel(|r| work(1, r), &profile, 1, clock);
    let e = timed(clock, || slow(0..1));
    assert!((2.85 * WORK_S..=3.3 * WORK_S).contains(&e), "wrapped elapsed {e}");
    // Empty ranges do no work and no dilation.
    assert!(timed(clock, || slow(0..0)) < WORK_S);
}

#[test]
fn pool_timing_sees_dilation_per_core() {
    let clock = TimingClock::for_workers(4);
    let mut pool = ThreadPool::with_clock(CoreSet::first_n(4).unwrap(), Pinning::BestEffort, clock).unwrap();
    let work = spin_work(clock);
    let profile = CoreProfile::parse("1,1,3,3", 4).unwrap();
    let k = EmulatedKernel::new(&work, &profile, clock);
    let subtasks: Vec<_> = (0..4).map(|i| SubTask::new(i, 0..1, &k)).collect();
    let t = pool.execute(&subtasks).unwrap();
    println!("clock {}: {:?}", clock.name(), t.per_core_elapsed);
    for (i, &f) in profile.factors().iter().enumerate() {
        let e = t.per_core_elapsed[i];
        assert!(
            (0.95 * f * WORK_S..=1.1 * f * WORK_S).contains(&e),
            "core {i}: {e} for factor {f}"
        );
    }
}

fn random_gemm(seed: u64, m: usize, n: usize, k: usize) -> I8Gemm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..m * k).map(|_| rng.random::<u8>()).collect();
    let b = (0..k * n).map(|_| rng.random::<i8>()).collect();
    I8Gemm::new(m, n, k, a, b).unwrap()
}

fn scheduler(clock: TimingClock) -> Scheduler {
    let pool = ThreadPool::with_clock(CoreSet::first_n(4).unwrap(), Pinning::BestEffort, clock).unwrap();
    Scheduler::new(pool, Arc::new(PerformanceTable::new(4, 0.3, 1.0).unwrap())).unwrap()
}

#[test]
fn outputs_are_identical_with_and_without_emulation() {
    let clock = TimingClock::for_workers(4);
    let mut sched = scheduler(clock);
    let class = KernelClass::new("gemm").unwrap();
    let p = random_gemm(7, 4, 96, 64);
    let profile = CoreProfile::parse("1,2.5,3,1", 4).unwrap();

    let plain = I8GemmKernel::new(&p);
    sched.run_kernel(&class, p.n(), &plain, false).unwrap();
    let dilated = I8GemmKernel::new(&p);
    let ek = EmulatedKernel::new(&dilated, &profile, clock);
    sched.run_kernel(&class, p.n(), &ek, true).unwrap();
    assert_eq!(plain.into_output(), dilated.into_output());
}

/// Runs fixed-work launches under `profile` and returns (mean per-core
/// elapsed over the last 10 launches, final ratios).
fn converge(profile: &CoreProfile, launches: usize) -> (Vec<f64>, Vec<f64>) {
    let clock = TimingClock::for_workers(4);
    let mut sched = scheduler(clock);
    let class = KernelClass::new("spin").unwrap();
    // Each unit costs a fixed amount of time, so work is divisible.
    struct Units(TimingClock);
    impl RangeKernel for Units {
        fn run(&self, _core: usize, r: Range<usize>) {
            let c = self.0;
            spin_until(c, c.now() + r.len() as f64 * 20e-6);
        }
    }
    let work = Units(clock);
    let ek = EmulatedKernel::new(&work, profile, clock);
    let mut tail = vec![0.0; 4];
    let mut ratios = vec![];
    for i in 0..launches {
        let rep = sched.run_kernel(&class, 400, &ek, true).unwrap();
        if i + 10 >= launches {
            for (t, e) in tail.iter_mut().zip(&rep.timing.per_core_elapsed) {
                *t += e / 10.0;
            }
        }
        ratios = rep.updated_ratios;
    }
    (tail, ratios)
}

#[test]
fn doubling_factors_doubles_elapsed_but_not_ratios() {
    let base = CoreProfile::parse("1,1,3,3", 4).unwrap();
    let (e1, r1) = converge(&base, 30);
    let (e2, r2) = converge(&base.scaled(2.0).unwrap(), 30);
    println!("elapsed {e1:?} vs {e2:?}\nratios {r1:?} vs {r2:?}");
    for i in 0..4 {
        let q = e2[i] / e1[i];
        assert!((1.8..=2.2).contains(&q), "core {i}: elapsed ratio {q}");
        assert!((r2[i] / r1[i] - 1.0).abs() <= 0.1, "core {i}: {} vs {}", r1[i], r2[i]);
    }
}

#[test]
fn ratios_track_injected_factors() {
    let (_, r) = converge(&CoreProfile::parse("2x1,2x3", 4).unwrap(), 30);
    let q = (r[0] + r[1]) / (r[2] + r[3]);
    assert!((2.7..=3.3).contains(&q), "fast/slow {q}, ratios {r:?}");
}

#[test]
fn schedule_switches_between_launches() {
    let s = ProfileSchedule::parse("1,1,3,3@0,1,1,1,1@40", 4).unwrap();
    assert_eq!(s.profile_at(39).factors(), &[1.0, 1.0, 3.0, 3.0]);
    assert_eq!(s.profile_at(40).factors(), &[1.0; 4]);
    let late = ProfileSchedule::parse("1,1,3,3@5", 4).unwrap();
    assert_eq!(late.profile_at(4).factors(), &[1.0; 4]);
    assert_eq!(late.profile_at(5).factors(), &[1.0, 1.0, 3.0, 3.0]);
}
