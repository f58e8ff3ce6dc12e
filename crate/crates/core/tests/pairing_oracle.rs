//! Assignment optimality against permutation enumeration, and properties
//! of the rank-based distance and re-pairing.

use balmatch::assignment::solve_assignment;
use balmatch::cardmatch::{Certificate, MatchSolution};
use balmatch::data::{pair_differences, Column, ColumnKind, CovariateValue, Group, StudyData, Unit};
use balmatch::pairing::{optimal_pairing, robust_mahalanobis, DistanceMatrix};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force(costs: &[i64], n: usize) -> i64 {
    permutations(n).iter().map(|p| p.iter().enumerate().map(|(r, &c)| costs[r * n + c]).sum()).min().unwrap()
}

proptest! {
    #[test]
    fn integer_assignment_is_optimal(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let costs: Vec<i64> = (0..n * n).map(|_| rng.random_range(0..50)).collect();
        let a = solve_assignment(&costs, n, n).unwrap();
        prop_assert_eq!(a.total, brute_force(&costs, n));
        let mut cols = a.row_to_col.clone();
        cols.sort_unstable();
        prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn float_assignment_is_optimal(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let costs: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 10.0).collect();
        let a = solve_assignment(&costs, n, n).unwrap();
        let best = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| costs[r * n + c]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((a.total - best).abs() < 1e-9);
    }
}

#[test]
fn two_to_one_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let n = rng.random_range(1..=3);
        let m = 2 * n;
        let entries: Vec<f64> = (0..n * m).map(|_| rng.random_range(0..20) as f64).collect();
        let d = DistanceMatrix::new((0..n).collect(), (0..m).collect(), entries.clone()).unwrap();
        let got = optimal_pairing(&d, 2).unwrap();
        // Permuting the columns and giving consecutive pairs to each row
        // enumerates every 2-to-1 assignment.
        let best = permutations(m)
            .iter()
            .map(|p| (0..m).map(|k| entries[(k / 2) * m + p[k]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(got.total_distance, best);
    }
}

fn study(n_t: usize, n_c: usize, k: usize, seed: u64) -> StudyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = |i: usize, g: Group| Unit {
        id: format!("{g:?}{i}"),
        group: g,
        covariates: (0..k).map(|_| CovariateValue::Numeric(rng.random_range(0..6) as f64)).collect(),
        outcome: Some(rng.random::<f64>() * 10.0),
        row: i,
    };
    let treated = (0..n_t).map(|i| unit(i, Group::Treated)).collect();
    let controls = (0..n_c).map(|i| unit(i, Group::Control)).collect();
    StudyData {
        schema: (0..k).map(|j| Column { name: format!("x{j}"), kind: ColumnKind::Numeric, levels: vec![], missing_allowed: false }).collect(),
        treated,
        controls,
    }
}

#[test]
fn mean_difference_does_not_depend_on_pairing() {
    let d = study(12, 12, 2, 3);
    let base = MatchSolution::from_selection((0..12).collect(), (0..12).collect(), 1, Certificate::ProvedOptimal, 0);
    let m0 = pair_differences(&base, &d).unwrap().y.iter().sum::<f64>() / 12.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let mut cs: Vec<usize> = (0..12).collect();
        cs.shuffle(&mut rng);
        let pairing = (0..12).map(|t| (t, vec![cs[t]])).collect();
        let y = pair_differences(&base.with_pairing(pairing), &d).unwrap();
        let m = y.y.iter().sum::<f64>() / 12.0;
        assert!((m - m0).abs() < 1e-12);
    }
}

#[test]
fn distance_is_invariant_to_monotone_transforms() {
    let d = study(8, 10, 3, 4);
    let sol = MatchSolution::from_selection((0..8).collect(), (0..8).collect(), 1, Certificate::ProvedOptimal, 0);
    let cols = ["x0", "x1", "x2"];
    let a = robust_mahalanobis(&d, &sol, &cols).unwrap();
    let mut e = d.clone();
    for u in e.treated.iter_mut().chain(e.controls.iter_mut()) {
        if let CovariateValue::Numeric(v) = u.covariates[1] {
            u.covariates[1] = CovariateValue::Numeric((v * 0.7).exp() - 3.0);
        }
    }
    let b = robust_mahalanobis(&e, &sol, &cols).unwrap();
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn swapping_identical_units_keeps_total_distance() {
    let mut d = study(6, 6, 2, 8);
    // Treated 0 and control 0 share covariates; swap their group labels.
    d.controls[0].covariates = d.treated[0].covariates.clone();
    let sol = MatchSolution::from_selection((0..6).collect(), (0..6).collect(), 1, Certificate::ProvedOptimal, 0);
    let a = optimal_pairing(&robust_mahalanobis(&d, &sol, &["x0", "x1"]).unwrap(), 1).unwrap();
    let mut e = d.clone();
    std::mem::swap(&mut e.treated[0], &mut e.controls[0]);
    let b = optimal_pairing(&robust_mahalanobis(&e, &sol, &["x0", "x1"]).unwrap(), 1).unwrap();
    assert!((a.total_distance - b.total_distance).abs() < 1e-9);
}
