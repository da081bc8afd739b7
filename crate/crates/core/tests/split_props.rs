mod common;

use common::{max_deviation, min_max_deviation};
use hetpar::{split, static_equal_split};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_plan(total: usize, ratios: &[f64], g: usize) {
    let plan = split(total, ratios, g).unwrap();
    let p = &plan.partitions;
    assert_eq!(p.iter().sum::<usize>(), total, "{total} {ratios:?} {g}: {p:?}");
    let last = p.iter().rposition(|&x| x > 0);
    for (i, &x) in p.iter().enumerate() {
        if Some(i) != last {
            assert_eq!(x % g, 0, "{total} {ratios:?} {g}: {p:?}");
        }
    }
    if g == 1 {
        let sum: f64 = ratios.iter().sum();
        for (&x, &r) in p.iter().zip(ratios) {
            let ideal = r / sum * total as f64;
            assert!((x as f64 - ideal).abs() < 1.0, "{total} {ratios:?}: {p:?}");
        }
    }
}

#[test]
fn conservation_and_proportionality_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2048);
    for total in 0..=2048 {
        let n = 1 + total % 8;
        let ratios: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..10.0)).collect();
        for g in [1, 4, 32] {
            check_plan(total, &ratios, g);
        }
    }
}

#[test]
fn equal_split_examples_and_conservation() {
    for total in [0, 1, 31, 32, 33, 100, 4097] {
        for n in 1..=8 {
            for g in [1, 4, 32] {
                let p = static_equal_split(total, n, g).unwrap().partitions;
                assert_eq!(p.iter().sum::<usize>(), total);
            }
        }
    }
}

#[test]
fn matches_minimax_enumeration_oracle() {
    // The example split(10, [1,1,1]) and a spread of small cases.
    assert_eq!(split(10, &[1.0; 3], 1).unwrap().partitions, vec![4, 3, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let n = rng.random_range(1..=4);
        let total = rng.random_range(0..=12);
        let ratios: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let sum: f64 = ratios.iter().sum();
        let got = split(total, &ratios, 1).unwrap().partitions;
        let best = min_max_deviation(total, &ratios);
        let ours = max_deviation(&got, total, &ratios, sum);
        assert!(ours <= best + 1e-12, "{total} {ratios:?}: {got:?} dev {ours} > {best}");
    }
}

proptest! {
    #[test]
    fn power_of_two_scaling_is_exact(
        ratios in vec(0.01f64..10.0, 1..8),
        total in 0usize..5000,
        shift in -20i32..20,
        g in prop::sample::select(vec![1usize, 4, 32]),
    ) {
        let c = 2f64.powi(shift);
        let scaled: Vec<f64> = ratios.iter().map(|r| r * c).collect();
        prop_assert_eq!(split(total, &ratios, g).unwrap(), split(total, &scaled, g).unwrap());
    }

    #[test]
    fn arbitrary_scaling(
        ratios in vec(0.01f64..10.0, 1..8),
        total in 0usize..5000,
        c in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = ratios.iter().map(|r| r * c).collect();
        prop_assert_eq!(split(total, &ratios, 1).unwrap(), split(total, &scaled, 1).unwrap());
    }
}
