//! Subset ILP against exhaustive enumeration of selections.

use balmatch::balance::{BalanceConstraint, BalanceSpec};
use balmatch::cardmatch::{escalate_ratio, solve_subset_ilp, Certificate, MatchProblem, SolverOptions};
use balmatch::data::{Column, ColumnKind, CovariateValue, Group, StudyData, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    t: usize,
    c: usize,
    spec: BalanceSpec,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let t = rng.random_range(1..=5);
    let c = rng.random_range(t..=7);
    let k = rng.random_range(0..=3);
    let mut spec = BalanceSpec::new();
    for j in 0..k {
        let binary = rng.random_bool(0.5);
        let draw = |rng: &mut ChaCha8Rng| if binary { rng.random_range(0..2) as f64 } else { rng.random_range(0..4) as f64 };
        let tv = (0..t).map(|_| draw(rng)).collect();
        let cv = (0..c).map(|_| draw(rng)).collect();
        let tol = [0.0, 0.25, 0.5][rng.random_range(0..3)];
        spec.push(BalanceConstraint::new(format!("f{j}"), tv, cv, tol).unwrap()).unwrap();
    }
    Instance { t, c, spec }
}

/// Largest feasible number of treated units at `ratio`, by enumeration.
/// At ratio above one only the full treated set counts.
fn oracle(inst: &Instance, ratio: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for tm in 0u32..(1 << inst.t) {
        let ts: Vec<usize> = (0..inst.t).filter(|i| tm >> i & 1 == 1).collect();
        if ratio > 1 && ts.len() != inst.t {
            continue;
        }
        if best.is_some_and(|b| b >= ts.len()) {
            continue;
        }
        for cm in 0u32..(1 << inst.c) {
            if cm.count_ones() as usize != ratio * ts.len() {
                continue;
            }
            let cs: Vec<usize> = (0..inst.c).filter(|j| cm >> j & 1 == 1).collect();
            let ok = ts.is_empty()
                || inst.spec.constraints.iter().all(|con| {
                    let mt = ts.iter().map(|&i| con.treated_values[i]).sum::<f64>() / ts.len() as f64;
                    let mc = cs.iter().map(|&j| con.control_values[j]).sum::<f64>() / cs.len() as f64;
                    (mt - mc).abs() <= con.tolerance + 1e-9
                });
            if ok {
                best = Some(ts.len());
                break;
            }
        }
    }
    best
}

#[test]
fn subset_ilp_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..120 {
        let inst = random_instance(&mut rng);
        let ratio = if inst.c >= 2 * inst.t && rng.random_bool(0.4) { 2 } else { 1 };
        let p = MatchProblem { n_treated: inst.t, n_controls: inst.c, spec: &inst.spec, ratio };
        let sol = solve_subset_ilp(&p, &SolverOptions::default()).unwrap();
        match oracle(&inst, ratio) {
            Some(n) => {
                assert_eq!(sol.certificate, Certificate::ProvedOptimal, "case {case}");
                assert_eq!(sol.objective, ratio * n, "case {case}");
                assert!(p.admits(&sol.selected_treated, &sol.selected_controls));
            }
            None => assert_eq!(sol.certificate, Certificate::Infeasible, "case {case}"),
        }
    }
}

fn categorical_study(t_levels: &[u32], c_levels: &[u32]) -> StudyData {
    let unit = |i: usize, g: Group, l: u32| Unit {
        id: format!("{g:?}{i}"),
        group: g,
        covariates: vec![CovariateValue::Categorical(l)],
        outcome: Some(0.0),
        row: i,
    };
    StudyData {
        schema: vec![Column { name: "x".into(), kind: ColumnKind::Categorical, levels: vec!["a".into(), "b".into()], missing_allowed: false }],
        treated: t_levels.iter().enumerate().map(|(i, &l)| unit(i, Group::Treated, l)).collect(),
        controls: c_levels.iter().enumerate().map(|(i, &l)| unit(i, Group::Control, l)).collect(),
    }
}

#[test]
fn escalation_stops_at_first_infeasible_ratio() {
    // Level b has 3 treated but only 5 controls: 1-to-1 uses every treated
    // unit, 2-to-1 cannot be finely balanced.
    let d = categorical_study(&[0, 1, 1, 1], &[0, 0, 0, 0, 1, 1, 1, 1, 1]);
    let spec = balmatch::balance::build_spec(&d, &[balmatch::BalanceDecl::Fine { column: "x".into() }]).unwrap();
    let sol = escalate_ratio(&d, &spec, &SolverOptions::default()).unwrap();
    assert_eq!(sol.ratio, 1);
    assert_eq!(sol.n_matched_treated(), 4);

    // Enough controls in both levels: 2-to-1 is feasible.
    let d = categorical_study(&[0, 1], &[0, 0, 1, 1, 1]);
    let spec = balmatch::balance::build_spec(&d, &[balmatch::BalanceDecl::Fine { column: "x".into() }]).unwrap();
    let sol = escalate_ratio(&d, &spec, &SolverOptions::default()).unwrap();
    assert_eq!(sol.ratio, 2);
    assert_eq!(sol.objective, 4);
}

#[test]
fn escalation_keeps_subset_when_not_all_treated_fit() {
    // Level b has 3 treated, 1 control: only a subset can be matched.
    let d = categorical_study(&[0, 1, 1, 1], &[0, 0, 0, 1]);
    let spec = balmatch::balance::build_spec(&d, &[balmatch::BalanceDecl::Fine { column: "x".into() }]).unwrap();
    let sol = escalate_ratio(&d, &spec, &SolverOptions::default()).unwrap();
    assert_eq!(sol.ratio, 1);
    assert_eq!(sol.n_matched_treated(), 2);
}
