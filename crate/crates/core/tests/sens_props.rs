//! Bound validity by enumeration, monotonicity, Hodges-Lehmann against
//! Walsh averages, and amplification identities.

use balmatch::data::PairDifferences;
use balmatch::scores::{compute_scores, statistic_value, ScoreVector, StatFamily};
use balmatch::sens::{
    amplify, gamma_from, hl_interval, pvalue_bounds_exact, pvalue_bounds_normal, sensitivity_value, BoundMethod, ExactOptions, GammaModel,
};
use balmatch::stats::{mad, median};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All `(value, probability)` outcomes of `Σ B_i q_i` with
/// `B_i ~ Bernoulli(π_i)`.
fn enumerate(q: &[f64], pi: &[f64]) -> Vec<(f64, f64)> {
    let n = q.len();
    (0u32..(1 << n))
        .map(|mask| {
            let mut t = 0.0;
            let mut p = 1.0;
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    t += q[i];
                    p *= pi[i];
                } else {
                    p *= 1.0 - pi[i];
                }
            }
            (t, p)
        })
        .collect()
}

fn check_sandwich(rng: &mut ChaCha8Rng, integer: bool) -> usize {
    let n = rng.random_range(1..=10);
    let gamma = [1.5, 2.0, 3.0][rng.random_range(0..3)];
    let q: Vec<f64> = if integer {
        (0..n).map(|_| rng.random_range(0..8) as f64).collect()
    } else {
        (0..n).map(|_| rng.random::<f64>() * 3.0).collect()
    };
    if q.iter().all(|v| *v == 0.0) {
        return 0;
    }
    let (lo, hi) = (1.0 / (1.0 + gamma), gamma / (1.0 + gamma));
    let pi: Vec<f64> = (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    let scores = ScoreVector { q: q.clone(), signs: vec![0; n], family: StatFamily::PermT, integer_scale: integer.then_some(1.0) };
    let outcomes = enumerate(&q, &pi);
    let mut violations = 0;
    for &(t, _) in &outcomes {
        let tail: f64 = outcomes.iter().filter(|(v, _)| *v >= t - 1e-12).map(|(_, p)| p).sum();
        let b = pvalue_bounds_exact(&scores, GammaModel::new(gamma).unwrap(), t, &ExactOptions::default()).unwrap();
        if tail < b.lower - 1e-12 || tail > b.upper + 1e-12 {
            violations += 1;
        }
    }
    violations
}

#[test]
fn exact_bounds_sandwich_every_assignment_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let v: usize = (0..60).map(|_| check_sandwich(&mut rng, true) + check_sandwich(&mut rng, false)).sum();
    assert_eq!(v, 0);
}

#[test]
fn bounds_are_monotone_in_gamma() {
    let y = PairDifferences::new((0..60).map(|i| ((i * 29 % 17) as f64) - 5.0).collect::<Vec<_>>()).unwrap();
    let s = compute_scores(&y, StatFamily::Wilcoxon).unwrap();
    let t = statistic_value(&s);
    let mut prev = (1.0f64, 0.0f64);
    for g in [1.0, 1.2, 1.5, 2.0, 3.0, 5.0] {
        let m = GammaModel::new(g).unwrap();
        for b in [pvalue_bounds_normal(&s, m, t).unwrap(), pvalue_bounds_exact(&s, m, t, &ExactOptions::default()).unwrap()] {
            assert!(b.lower <= b.upper);
        }
        let b = pvalue_bounds_exact(&s, m, t, &ExactOptions::default()).unwrap();
        assert!(b.upper >= prev.1 - 1e-15 && b.lower <= prev.0 + 1e-15);
        prev = (b.lower, b.upper);
    }
}

#[test]
fn large_gamma_pushes_upper_bound_to_one() {
    let y = PairDifferences::new(vec![1.0, -2.0, 3.0, 4.0, -0.5, 2.5]).unwrap();
    let s = compute_scores(&y, StatFamily::Wilcoxon).unwrap();
    let t = statistic_value(&s);
    let b = pvalue_bounds_normal(&s, GammaModel::new(1e6).unwrap(), t).unwrap();
    assert!(b.upper > 0.999);
}

fn walsh_median(y: &[f64]) -> f64 {
    let mut w = Vec::new();
    for i in 0..y.len() {
        for j in i..y.len() {
            w.push(0.5 * (y[i] + y[j]));
        }
    }
    median(&w)
}

#[test]
fn hl_matches_walsh_median_and_nests() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..30 {
        let n = rng.random_range(3..=31);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
        let d = PairDifferences::new(y.clone()).unwrap();
        let e = hl_interval(&d, StatFamily::Wilcoxon, GammaModel::new(1.0).unwrap()).unwrap();
        assert!((e.min_estimate - walsh_median(&y)).abs() <= 1e-4 * mad(&y));
        assert_eq!(e.min_estimate, e.max_estimate);
        let mut prev = e;
        for g in [1.25, 1.5, 2.0, 3.0] {
            let e = hl_interval(&d, StatFamily::Wilcoxon, GammaModel::new(g).unwrap()).unwrap();
            assert!(e.min_estimate <= prev.min_estimate && prev.max_estimate <= e.max_estimate);
            prev = e;
        }
    }
}

#[test]
fn amplification_round_trip() {
    for g in [1.1, 1.42, 1.5, 1.77, 3.0] {
        let lambdas: Vec<f64> = (1..40).map(|k| g + 0.25 * k as f64).collect();
        for p in amplify(g, &lambdas).unwrap() {
            assert!((gamma_from(p.lambda, p.delta) - g).abs() < 1e-12);
            assert!(p.delta > g);
        }
    }
    let far = amplify(2.0, &[1e9]).unwrap();
    assert!((far[0].delta - 2.0).abs() < 1e-6);
}

#[test]
fn sensitivity_value_brackets_crossing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y: Vec<f64> = (0..150).map(|_| rng.random::<f64>() * 2.0 - 0.6).collect();
    let s = compute_scores(&PairDifferences::new(y).unwrap(), StatFamily::Wilcoxon).unwrap();
    let t = statistic_value(&s);
    let g = sensitivity_value(&s, t, 0.05, BoundMethod::Normal).unwrap();
    assert!(g > 1.0);
    let below = pvalue_bounds_normal(&s, GammaModel::new(g - 2e-3).unwrap(), t).unwrap().upper;
    let above = pvalue_bounds_normal(&s, GammaModel::new(g + 2e-3).unwrap(), t).unwrap().upper;
    assert!(below <= 0.05 && above > 0.05);
}
