mod common;

use abpipe_core::stats::{mann_whitney_u, welch_t_test, PValueMethod, StatsError};
use common::{brute_force_u, oracle_welch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn welch_matches_scipy_example() {
    let a = [1.2, 3.4, 2.2, 5.1, 0.7, 3.3];
    let b = [2.0, 6.1, 4.4, 3.9, 5.5, 7.2, 4.8];
    let r = welch_t_test(&a, &b).unwrap();
    assert!((r.t - -2.3997511999792853).abs() < 1e-12, "{}", r.t);
    assert!((r.df - 10.797399735560083).abs() < 1e-9, "{}", r.df);
    assert!((r.p - 0.035636873753081805).abs() < 1e-9, "{}", r.p);
}

#[test]
fn welch_matches_statrs_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let na = rng.random_range(2..=50);
        let nb = rng.random_range(2..=50);
        let shift = rng.random_range(-2.0..2.0);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0.0..10.0) * 1.5 + shift).collect();
        let r = welch_t_test(&a, &b).unwrap();
        let (t, df, p) = oracle_welch(&a, &b);
        assert!((r.t - t).abs() < 1e-9 * t.abs().max(1.0));
        assert!((r.df - df).abs() < 1e-9 * df);
        assert!((r.p - p).abs() < 1e-9, "na={na} nb={nb} p={} oracle={p}", r.p);
    }
}

#[test]
fn welch_input_errors() {
    assert!(matches!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(StatsError::TooFewValues { got: 1, .. })));
    assert!(matches!(welch_t_test(&[1.0, f64::NAN], &[1.0, 2.0]), Err(StatsError::NonFinite { .. })));
    let r = welch_t_test(&[3.0, 3.0], &[3.0, 3.0, 3.0]).unwrap();
    assert!(r.degenerate && r.p == 1.0);
    let r = welch_t_test(&[3.0, 3.0], &[4.0, 4.0]).unwrap();
    assert!(r.degenerate && r.p == 0.0 && r.t == f64::NEG_INFINITY);
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 2..40)
}

proptest! {
    #[test]
    fn welch_swapping_negates_t(a in sample(), b in sample()) {
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        prop_assume!(!ab.degenerate);
        prop_assert!((ab.t + ba.t).abs() <= 1e-12 * ab.t.abs().max(1.0));
        prop_assert!((ab.df - ba.df).abs() <= 1e-12 * ab.df);
        prop_assert!((ab.p - ba.p).abs() <= 1e-12);
    }

    #[test]
    fn welch_is_shift_invariant(a in sample(), b in sample(), c in -100.0..100.0f64) {
        let base = welch_t_test(&a, &b).unwrap();
        prop_assume!(!base.degenerate);
        let sa: Vec<f64> = a.iter().map(|x| x + c).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + c).collect();
        let shifted = welch_t_test(&sa, &sb).unwrap();
        prop_assert!((base.p - shifted.p).abs() <= 1e-9, "{} vs {}", base.p, shifted.p);
        prop_assert!((base.t - shifted.t).abs() <= 1e-9 * base.t.abs().max(1.0));
    }

    #[test]
    fn welch_p_is_a_probability(a in sample(), b in sample()) {
        let r = welch_t_test(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p));
    }

    #[test]
    fn mann_whitney_u_matches_pair_count(
        a in prop::collection::vec(0..8i32, 2..60),
        b in prop::collection::vec(0..8i32, 2..60),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        prop_assert_eq!(r.u, brute_force_u(&a, &b));
        prop_assert_eq!(r.u + r.u_other, (a.len() * b.len()) as f64);
        prop_assert!((0.0..=1.0).contains(&r.p));
        let swapped = mann_whitney_u(&b, &a).unwrap();
        prop_assert_eq!(swapped.u, r.u_other);
        prop_assert!((swapped.p - r.p).abs() < 1e-12);
    }
}

/// Two-sided exact p by enumerating every split of the pooled values.
fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, na) = (pooled.len(), a.len());
    let observed = brute_force_u(a, b);
    let (mut lower, mut upper, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (xa, xb): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
            pooled.iter().copied().enumerate().partition(|(i, _)| mask & (1 << i) != 0);
        let xa: Vec<f64> = xa.into_iter().map(|(_, v)| v).collect();
        let xb: Vec<f64> = xb.into_iter().map(|(_, v)| v).collect();
        let u = brute_force_u(&xa, &xb);
        total += 1;
        lower += u64::from(u <= observed);
        upper += u64::from(u >= observed);
    }
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

#[test]
fn mann_whitney_exact_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let na = rng.random_range(2..=7);
        let nb = rng.random_range(2..=7);
        let a: Vec<f64> = (0..na).map(|_| f64::from(rng.random_range(0..6))).collect();
        let b: Vec<f64> = (0..nb).map(|_| f64::from(rng.random_range(1..7))).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        if r.degenerate {
            continue;
        }
        assert_eq!(r.method, PValueMethod::Exact);
        let oracle = permutation_p(&a, &b);
        assert!((r.p - oracle).abs() < 1e-12, "{a:?} {b:?}: {} vs {oracle}", r.p);
    }
}

#[test]
fn mann_whitney_switches_to_normal_above_twenty() {
    let a: Vec<f64> = (0..21).map(f64::from).collect();
    let b: Vec<f64> = (0..20).map(|x| f64::from(x) + 0.5).collect();
    assert_eq!(mann_whitney_u(&a, &b).unwrap().method, PValueMethod::Normal);
    assert_eq!(mann_whitney_u(&a[..20], &b).unwrap().method, PValueMethod::Exact);
}

#[test]
fn mann_whitney_on_binary_outcomes_detects_a_rate_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..20_000).map(|_| f64::from(u8::from(rng.random_bool(0.2)))).collect();
    let b: Vec<f64> = (0..20_000).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
    let r = mann_whitney_u(&a, &b).unwrap();
    assert!(r.p < 1e-50, "{}", r.p);
    let c: Vec<f64> = (0..20_000).map(|_| f64::from(u8::from(rng.random_bool(0.2)))).collect();
    assert!(mann_whitney_u(&a, &c).unwrap().p > 1e-4);
}
