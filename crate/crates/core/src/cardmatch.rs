//! Cardinality matching: the largest L-to-1 match meeting every balance
//! constraint.
//!
//! Balance constraints only see which units are selected, so the pair
//! variables `a_tc` collapse to one selection variable per treated unit
//! (`s_t`) and per control (`u_c`):
//!
//! ```text
//! max Σ s_t   s.t.  Σ u_c = L·Σ s_t,
//!                   -b_k·L·Σ s_t <= L·Σ s_t f_k(t) - Σ u_c f_k(c) <= b_k·L·Σ s_t
//! ```
//!
//! Who is paired with whom is left to [`crate::pairing`]. The refinement
//! in [`closest_largest_match`] does need the pair variables, because it
//! minimises a pair distance over all largest balanced matches.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{BalanceError, BalanceSpec};
use crate::data::StudyData;
use crate::pairing::DistanceMatrix;
use crate::solver::{solve_binary_program, Incumbent, LpProblem, MipOptions, MipOutcome, Sense};

/// Largest dense tableau (rows × columns) the pair formulation may build.
pub const MAX_PAIR_TABLEAU: usize = 60_000_000;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("node limit reached after {nodes} nodes without proving optimality")]
    NodeLimitExceeded { incumbent: Option<Box<MatchSolution>>, nodes: usize },
    #[error("linear programming failure: {0}")]
    Solver(String),
    #[error("the closest-match stage found no match of the size the first stage proved feasible")]
    InfeasibleContradiction,
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("ratio must be at least 1")]
    BadRatio,
    #[error("distance matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    DistanceShape { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("pair formulation needs a {0}-entry tableau, above the supported limit")]
    ProblemTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certificate {
    ProvedOptimal,
    Infeasible,
}

/// Selected units, ratio and a pairing of the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSolution {
    /// Indices into `StudyData::treated`, ascending.
    pub selected_treated: Vec<usize>,
    /// Indices into `StudyData::controls`, ascending.
    pub selected_controls: Vec<usize>,
    pub ratio: usize,
    /// Treated index to its `ratio` control indices.
    pub pairing: BTreeMap<usize, Vec<usize>>,
    /// Number of matched pairs, `Σ a_tc = ratio · |selected_treated|`.
    pub objective: usize,
    pub certificate: Certificate,
    /// Branch-and-bound nodes explored.
    pub nodes: usize,
}

impl MatchSolution {
    fn infeasible(ratio: usize, nodes: usize) -> Self {
        MatchSolution {
            selected_treated: Vec::new(),
            selected_controls: Vec::new(),
            ratio,
            pairing: BTreeMap::new(),
            objective: 0,
            certificate: Certificate::Infeasible,
            nodes,
        }
    }

    /// Builds a solution from selections, pairing the units in index order.
    pub fn from_selection(mut treated: Vec<usize>, mut controls: Vec<usize>, ratio: usize, certificate: Certificate, nodes: usize) -> Self {
        treated.sort_unstable();
        controls.sort_unstable();
        debug_assert_eq!(controls.len(), ratio * treated.len());
        let pairing = treated
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, controls[i * ratio..(i + 1) * ratio].to_vec()))
            .collect();
        MatchSolution {
            objective: ratio * treated.len(),
            selected_treated: treated,
            selected_controls: controls,
            ratio,
            pairing,
            certificate,
            nodes,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.certificate == Certificate::ProvedOptimal
    }

    pub fn n_matched_treated(&self) -> usize {
        self.selected_treated.len()
    }

    /// Same selection with a different pairing.
    pub fn with_pairing(&self, pairing: BTreeMap<usize, Vec<usize>>) -> Self {
        debug_assert!(pairing.keys().copied().eq(self.selected_treated.iter().copied()));
        MatchSolution { pairing, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub integrality_tolerance: f64,
    pub node_limit: usize,
    /// Recorded for reproducibility. Every tie in the solver is broken by
    /// unit index, so no random numbers are drawn.
    pub deterministic_seed: u64,
    /// Try every ratio up to `C / T` instead of stopping at the first
    /// infeasible one.
    pub exhaustive_ratio_scan: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            integrality_tolerance: 1e-6,
            node_limit: 50_000,
            deterministic_seed: 0,
            exhaustive_ratio_scan: false,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), MatchError> {
        if !(self.integrality_tolerance > 0.0 && self.integrality_tolerance <= 1e-3) {
            return Err(MatchError::InvalidOptions(format!(
                "integrality tolerance {} outside (0, 1e-3]",
                self.integrality_tolerance
            )));
        }
        if self.node_limit == 0 {
            return Err(MatchError::InvalidOptions("node limit must be positive".into()));
        }
        Ok(())
    }

    fn mip(&self, integral_objective: bool) -> MipOptions {
        MipOptions {
            integrality_tolerance: self.integrality_tolerance,
            node_limit: self.node_limit,
            integral_objective,
            ..MipOptions::default()
        }
    }
}

/// One cardinality-matching instance at a fixed ratio.
#[derive(Debug, Clone, Copy)]
pub struct MatchProblem<'a> {
    pub n_treated: usize,
    pub n_controls: usize,
    pub spec: &'a BalanceSpec,
    pub ratio: usize,
}

impl<'a> MatchProblem<'a> {
    pub fn new(data: &StudyData, spec: &'a BalanceSpec, ratio: usize) -> Self {
        MatchProblem { n_treated: data.n_treated(), n_controls: data.n_controls(), spec, ratio }
    }

    /// True when the selection has the right counts and meets every
    /// constraint. At ratios above one every treated unit must be used.
    pub fn admits(&self, treated: &[usize], controls: &[usize]) -> bool {
        if controls.len() != self.ratio * treated.len() {
            return false;
        }
        if self.ratio > 1 && treated.len() != self.n_treated {
            return false;
        }
        if treated.is_empty() {
            return true;
        }
        self.spec.constraints.iter().all(|c| {
            let imb = c.mean_imbalance(treated, controls, self.ratio).expect("nonempty");
            c.is_satisfied_by(imb)
        })
    }
}

/// A balance row after centring and scaling: coefficients on treated and
/// control values plus the scaled tolerance.
struct ScaledRow {
    treated: Vec<f64>,
    controls: Vec<f64>,
    tolerance: f64,
}

/// Centres each constraint at its pooled mean (which leaves `Σ a_tc v_ktc`
/// unchanged once control and pair counts agree) and scales it to unit
/// magnitude. Constraints that vanish identically are dropped.
fn scaled_rows(spec: &BalanceSpec) -> Vec<ScaledRow> {
    spec.constraints
        .iter()
        .filter_map(|c| {
            let n = (c.treated_values.len() + c.control_values.len()).max(1) as f64;
            let center = c.treated_values.iter().chain(&c.control_values).sum::<f64>() / n;
            let dev = |v: &f64| v - center;
            let scale = c.treated_values.iter().chain(&c.control_values).map(|v| dev(v).abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                return None;
            }
            Some(ScaledRow {
                treated: c.treated_values.iter().map(|v| dev(v) / scale).collect(),
                controls: c.control_values.iter().map(|v| dev(v) / scale).collect(),
                tolerance: c.tolerance / scale,
            })
        })
        .collect()
}

fn selection_from(x: &[f64], t: usize, c: usize) -> (Vec<usize>, Vec<usize>) {
    let treated = (0..t).filter(|&i| x[i] > 0.5).collect();
    let controls = (0..c).filter(|&j| x[t + j] > 0.5).collect();
    (treated, controls)
}

/// Index-order greedy selection that keeps every constraint satisfied after
/// each accepted treated unit.
fn greedy_selection(problem: &MatchProblem) -> Option<(Vec<usize>, Vec<usize>)> {
    let l = problem.ratio;
    let k = problem.spec.constraints.len();
    let mut used = vec![false; problem.n_controls];
    let mut treated = Vec::new();
    let mut controls = Vec::new();
    // Running L·Σf_t - Σf_c per constraint.
    let mut sums = vec![0.0; k];
    let ok = |sums: &[f64], pairs: usize| {
        problem.spec.constraints.iter().zip(sums).all(|(c, s)| c.is_satisfied_by(s / pairs as f64))
    };
    for t in 0..problem.n_treated {
        let mut picked = Vec::with_capacity(l);
        let mut trial = sums.clone();
        for (kk, c) in problem.spec.constraints.iter().enumerate() {
            trial[kk] += l as f64 * c.treated_values[t];
        }
        let pairs = l * (treated.len() + 1);
        for c in 0..problem.n_controls {
            if used[c] {
                continue;
            }
            if picked.len() + 1 == l {
                // Last control: must close every constraint.
                let fits = problem.spec.constraints.iter().zip(&trial).all(|(con, s)| {
                    con.is_satisfied_by((s - con.control_values[c]) / pairs as f64)
                });
                if !fits {
                    continue;
                }
            }
            for (kk, con) in problem.spec.constraints.iter().enumerate() {
                trial[kk] -= con.control_values[c];
            }
            picked.push(c);
            if picked.len() == l {
                break;
            }
        }
        if picked.len() == l && ok(&trial, pairs) {
            for &c in &picked {
                used[c] = true;
            }
            controls.extend(picked);
            treated.push(t);
            sums = trial;
        } else if l > 1 {
            return None;
        }
    }
    Some((treated, controls))
}

/// Rounds an LP point to a selection and repairs it by single control
/// swaps, each chosen to reduce the total scaled constraint violation the
/// most. Returns the 0/1 vector once every constraint holds.
fn repair_selection(problem: &MatchProblem, x: &[f64]) -> Option<Vec<f64>> {
    const MAX_SWAPS: usize = 200;
    let (t, c, l) = (problem.n_treated, problem.n_controls, problem.ratio);
    let treated: Vec<usize> = (0..t).filter(|&i| x[i] >= 0.5).collect();
    let need = l * treated.len();
    if treated.is_empty() || need > c {
        return None;
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| x[t + b].partial_cmp(&x[t + a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut chosen = vec![false; c];
    order[..need].iter().for_each(|&j| chosen[j] = true);

    let cons = &problem.spec.constraints;
    let k = cons.len();
    let cap: Vec<f64> = cons.iter().map(|con| con.tolerance * need as f64).collect();
    let weight: Vec<f64> = cons
        .iter()
        .map(|con| {
            let m = con.treated_values.iter().chain(&con.control_values).fold(0.0f64, |a, v| a.max(v.abs()));
            if m > 0.0 { 1.0 / m } else { 1.0 }
        })
        .collect();
    // Control values laid out by control, then constraint.
    let cv: Vec<f64> = (0..c).flat_map(|j| cons.iter().map(move |con| con.control_values[j])).collect();
    let mut d: Vec<f64> = cons
        .iter()
        .map(|con| {
            l as f64 * treated.iter().map(|&i| con.treated_values[i]).sum::<f64>()
                - (0..c).filter(|&j| chosen[j]).map(|j| con.control_values[j]).sum::<f64>()
        })
        .collect();
    let violation = |d: &[f64]| -> f64 { (0..k).map(|kk| ((d[kk].abs() - cap[kk]).max(0.0)) * weight[kk]).sum() };

    let mut current = violation(&d);
    for _ in 0..MAX_SWAPS {
        if current == 0.0 {
            break;
        }
        let inside: Vec<usize> = (0..c).filter(|&j| chosen[j]).collect();
        let outside: Vec<usize> = (0..c).filter(|&j| !chosen[j]).collect();
        let best = inside
            .par_iter()
            .map(|&a| {
                let mut trial = vec![0.0; k];
                let mut best: Option<(f64, usize, usize)> = None;
                for &b in &outside {
                    for kk in 0..k {
                        trial[kk] = d[kk] + cv[a * k + kk] - cv[b * k + kk];
                    }
                    let v = violation(&trial);
                    if best.is_none_or(|(bv, _, _)| v < bv) {
                        best = Some((v, a, b));
                    }
                }
                best
            })
            .reduce(|| None, |p, q| match (p, q) {
                (Some(p), Some(q)) => Some(if q.0 < p.0 || (q.0 == p.0 && (q.1, q.2) < (p.1, p.2)) { q } else { p }),
                (p, None) => p,
                (None, q) => q,
            });
        let (v, a, b) = best?;
        if v >= current {
            return None;
        }
        for kk in 0..k {
            d[kk] += cv[a * k + kk] - cv[b * k + kk];
        }
        chosen[a] = false;
        chosen[b] = true;
        current = v;
    }
    if current > 0.0 {
        return None;
    }
    let mut out = vec![0.0; t + c];
    treated.iter().for_each(|&i| out[i] = 1.0);
    (0..c).filter(|&j| chosen[j]).for_each(|j| out[t + j] = 1.0);
    Some(out)
}

/// Largest selection at a fixed ratio, proved optimal by branch-and-bound.
///
/// At ratio one the number of matched treated units is maximised. At
/// larger ratios every treated unit must receive exactly `ratio` controls,
/// so the answer is either that full match or `Infeasible`.
pub fn solve_subset_ilp(problem: &MatchProblem, opts: &SolverOptions) -> Result<MatchSolution, MatchError> {
    opts.validate()?;
    if problem.ratio == 0 {
        return Err(MatchError::BadRatio);
    }
    let (t, c, l) = (problem.n_treated, problem.n_controls, problem.ratio);
    if l * t > c && l > 1 {
        return Ok(MatchSolution::infeasible(l, 0));
    }
    let lf = l as f64;
    let mut lp = LpProblem::new(t + c);
    if l == 1 {
        lp.cost[..t].iter_mut().for_each(|v| *v = -1.0);
    } else {
        lp.lower[..t].iter_mut().for_each(|v| *v = 1.0);
    }
    let mut count_row = vec![1.0; t + c];
    count_row[..t].iter_mut().for_each(|v| *v = -lf);
    lp.add_row(count_row, Sense::Eq, 0.0);
    for row in scaled_rows(problem.spec) {
        let controls: Vec<f64> = row.controls.iter().map(|v| -v).collect();
        if row.tolerance == 0.0 {
            let mut coeffs: Vec<f64> = row.treated.iter().map(|v| lf * v).collect();
            coeffs.extend_from_slice(&controls);
            lp.add_row(coeffs, Sense::Eq, 0.0);
        } else {
            let mut upper: Vec<f64> = row.treated.iter().map(|v| lf * (v - row.tolerance)).collect();
            upper.extend_from_slice(&controls);
            lp.add_row(upper, Sense::Le, 0.0);
            let mut lower: Vec<f64> = row.treated.iter().map(|v| lf * (v + row.tolerance)).collect();
            lower.extend_from_slice(&controls);
            lp.add_row(lower, Sense::Ge, 0.0);
        }
    }

    let seed = greedy_selection(problem).filter(|(tr, co)| problem.admits(tr, co)).map(|(tr, co)| {
        let mut x = vec![0.0; t + c];
        tr.iter().for_each(|&i| x[i] = 1.0);
        co.iter().for_each(|&j| x[t + j] = 1.0);
        let objective = if l == 1 { -(tr.len() as f64) } else { 0.0 };
        Incumbent { x, objective }
    });
    let accept = |x: &[f64]| {
        let (tr, co) = selection_from(x, t, c);
        problem.admits(&tr, &co)
    };
    let repair = |x: &[f64]| repair_selection(problem, x);
    let outcome = solve_binary_program(&lp, &opts.mip(true), seed, accept, repair).map_err(|e| MatchError::Solver(e.to_string()))?;
    match outcome {
        MipOutcome::Optimal { best, nodes } => {
            let (tr, co) = selection_from(&best.x, t, c);
            Ok(MatchSolution::from_selection(tr, co, l, Certificate::ProvedOptimal, nodes))
        }
        MipOutcome::Infeasible { nodes } => Ok(MatchSolution::infeasible(l, nodes)),
        MipOutcome::NodeLimit { best, nodes } => Err(MatchError::NodeLimitExceeded {
            incumbent: best.map(|b| {
                let (tr, co) = selection_from(&b.x, t, c);
                // Certificate withheld: the selection is feasible, not proved best.
                Box::new(MatchSolution::from_selection(tr, co, l, Certificate::Infeasible, nodes))
            }),
            nodes,
        }),
    }
}

/// Runs the ratio-escalation logic: a 1-to-1 match first; if it uses every
/// treated unit, ratios 2, 3, … until the first infeasible one.
pub fn escalate_ratio(data: &StudyData, spec: &BalanceSpec, opts: &SolverOptions) -> Result<MatchSolution, MatchError> {
    spec.check_sizes(data)?;
    let t = data.n_treated();
    let one = solve_subset_ilp(&MatchProblem::new(data, spec, 1), opts)?;
    if one.n_matched_treated() < t {
        return Ok(one);
    }
    let max_ratio = data.n_controls() / t;
    let mut best = one;
    let mut nodes = best.nodes;
    for l in 2..=max_ratio {
        let sol = solve_subset_ilp(&MatchProblem::new(data, spec, l), opts)?;
        nodes += sol.nodes;
        if sol.is_feasible() {
            best = sol;
        } else if !opts.exhaustive_ratio_scan {
            break;
        }
    }
    best.nodes = nodes;
    Ok(best)
}

/// Among all matches of the size and ratio found by [`escalate_ratio`],
/// one minimising the total treated-control distance.
///
/// `distances` must cover every treated unit (rows) and every control
/// (columns) of `data`.
pub fn closest_largest_match(
    data: &StudyData,
    spec: &BalanceSpec,
    distances: &DistanceMatrix,
    opts: &SolverOptions,
) -> Result<MatchSolution, MatchError> {
    let (t, c) = (data.n_treated(), data.n_controls());
    if distances.n_rows() != t || distances.n_cols() != c {
        return Err(MatchError::DistanceShape {
            rows: distances.n_rows(),
            cols: distances.n_cols(),
            expected_rows: t,
            expected_cols: c,
        });
    }
    let stage_one = escalate_ratio(data, spec, opts)?;
    let n_t = stage_one.n_matched_treated();
    if n_t == 0 {
        return Ok(stage_one);
    }
    let l = stage_one.ratio;
    let lf = l as f64;
    let rows = t + c + 1 + 2 * spec.len();
    let cols = t * c + t;
    let tableau = rows * (cols + 2 * rows);
    if tableau > MAX_PAIR_TABLEAU {
        return Err(MatchError::ProblemTooLarge(tableau));
    }

    let a = |ti: usize, ci: usize| ti * c + ci;
    let s = |ti: usize| t * c + ti;
    let mut lp = LpProblem::new(cols);
    for ti in 0..t {
        for ci in 0..c {
            lp.cost[a(ti, ci)] = distances.get(ti, ci);
        }
        if l > 1 {
            lp.lower[s(ti)] = 1.0;
        }
    }
    for ti in 0..t {
        let mut row = vec![0.0; cols];
        (0..c).for_each(|ci| row[a(ti, ci)] = 1.0);
        row[s(ti)] = -lf;
        lp.add_row(row, Sense::Eq, 0.0);
    }
    for ci in 0..c {
        let mut row = vec![0.0; cols];
        (0..t).for_each(|ti| row[a(ti, ci)] = 1.0);
        lp.add_row(row, Sense::Le, 1.0);
    }
    let mut size = vec![0.0; cols];
    (0..t).for_each(|ti| size[s(ti)] = 1.0);
    lp.add_row(size, Sense::Eq, n_t as f64);
    let pairs = (l * n_t) as f64;
    for r in scaled_rows(spec) {
        let mut row = vec![0.0; cols];
        for ti in 0..t {
            for ci in 0..c {
                row[a(ti, ci)] = r.treated[ti] - r.controls[ci];
            }
        }
        if r.tolerance == 0.0 {
            lp.add_row(row, Sense::Eq, 0.0);
        } else {
            lp.add_row(row.clone(), Sense::Le, r.tolerance * pairs);
            lp.add_row(row, Sense::Ge, -r.tolerance * pairs);
        }
    }

    let decode = |x: &[f64]| -> Option<MatchSolution> {
        let mut pairing = BTreeMap::new();
        for ti in 0..t {
            let cs: Vec<usize> = (0..c).filter(|&ci| x[a(ti, ci)] > 0.5).collect();
            let selected = x[s(ti)] > 0.5;
            match (selected, cs.len()) {
                (true, k) if k == l => {
                    pairing.insert(ti, cs);
                }
                (false, 0) => {}
                _ => return None,
            }
        }
        let treated: Vec<usize> = pairing.keys().copied().collect();
        let mut controls: Vec<usize> = pairing.values().flatten().copied().collect();
        controls.sort_unstable();
        if controls.windows(2).any(|w| w[0] == w[1]) || treated.len() != n_t {
            return None;
        }
        let problem = MatchProblem { n_treated: t, n_controls: c, spec, ratio: l };
        if !problem.admits(&treated, &controls) {
            return None;
        }
        Some(MatchSolution {
            objective: l * treated.len(),
            selected_treated: treated,
            selected_controls: controls,
            ratio: l,
            pairing,
            certificate: Certificate::ProvedOptimal,
            nodes: 0,
        })
    };

    // Stage one's selection, optimally paired, is a feasible starting point.
    let seed = crate::pairing::optimal_pairing_within(&stage_one, distances).ok().map(|paired| {
        let mut x = vec![0.0; cols];
        for (&ti, cs) in &paired.pairing {
            x[s(ti)] = 1.0;
            cs.iter().for_each(|&ci| x[a(ti, ci)] = 1.0);
        }
        let objective = lp.cost.iter().zip(&x).map(|(p, q)| p * q).sum();
        Incumbent { x, objective }
    });

    let outcome = solve_binary_program(&lp, &opts.mip(false), seed, |x| decode(x).is_some(), |_| None)
        .map_err(|e| MatchError::Solver(e.to_string()))?;
    match outcome {
        MipOutcome::Optimal { best, nodes } => {
            let mut sol = decode(&best.x).ok_or(MatchError::InfeasibleContradiction)?;
            sol.nodes = stage_one.nodes + nodes;
            Ok(sol)
        }
        MipOutcome::Infeasible { .. } => Err(MatchError::InfeasibleContradiction),
        MipOutcome::NodeLimit { best, nodes } => Err(MatchError::NodeLimitExceeded {
            incumbent: best.and_then(|b| decode(&b.x)).map(|mut s| {
                s.certificate = Certificate::Infeasible;
                s.nodes = nodes;
                Box::new(s)
            }),
            nodes,
        }),
    }
}

/// Total distance of the solution's pairing.
pub fn total_distance(sol: &MatchSolution, distances: &DistanceMatrix) -> f64 {
    sol.pairing.iter().flat_map(|(&t, cs)| cs.iter().map(move |&c| distances.get(t, c))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::BalanceConstraint;

    fn fine(t: &[f64], c: &[f64]) -> BalanceSpec {
        let mut spec = BalanceSpec::new();
        for level in [0.0, 1.0] {
            spec.push(
                BalanceConstraint::new(
                    format!("x={level}"),
                    t.iter().map(|&v| (v == level) as u8 as f64).collect(),
                    c.iter().map(|&v| (v == level) as u8 as f64).collect(),
                    0.0,
                )
                .unwrap(),
            )
            .unwrap();
        }
        spec
    }

    #[test]
    fn repair_swaps_into_balance() {
        // Controls 0 and 1 carry the LP weight but both sit at level 0.
        let spec = fine(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]);
        let p = MatchProblem { n_treated: 2, n_controls: 4, spec: &spec, ratio: 1 };
        let x = repair_selection(&p, &[1.0, 1.0, 0.9, 0.8, 0.3, 0.2]).unwrap();
        // Equal-gain swaps break ties towards the lowest control indices.
        assert_eq!(x, vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        // Level 1 has no control at all: nothing to repair towards.
        let spec = fine(&[0.0, 1.0], &[0.0, 0.0, 0.0]);
        let p = MatchProblem { n_treated: 2, n_controls: 3, spec: &spec, ratio: 1 };
        assert!(repair_selection(&p, &[1.0, 1.0, 0.7, 0.7, 0.6]).is_none());
    }

    #[test]
    fn fine_balance_instance_one_to_one() {
        let spec = fine(&[0.0, 1.0], &[0.0, 1.0, 1.0]);
        let p = MatchProblem { n_treated: 2, n_controls: 3, spec: &spec, ratio: 1 };
        let sol = solve_subset_ilp(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.objective, 2);
        assert_eq!(sol.certificate, Certificate::ProvedOptimal);
        assert!(sol.selected_controls.contains(&0));
    }

    #[test]
    fn fine_balance_instance_two_to_one_infeasible() {
        let spec = fine(&[0.0, 1.0], &[0.0, 1.0, 1.0]);
        let p = MatchProblem { n_treated: 2, n_controls: 3, spec: &spec, ratio: 2 };
        let sol = solve_subset_ilp(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.certificate, Certificate::Infeasible);
    }

    #[test]
    fn unconstrained_uses_every_treated_unit() {
        let spec = BalanceSpec::new();
        let p = MatchProblem { n_treated: 4, n_controls: 6, spec: &spec, ratio: 1 };
        let sol = solve_subset_ilp(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.objective, 4);
    }

    #[test]
    fn options_are_validated() {
        let spec = BalanceSpec::new();
        let p = MatchProblem { n_treated: 1, n_controls: 1, spec: &spec, ratio: 1 };
        let bad = SolverOptions { integrality_tolerance: 0.1, ..Default::default() };
        assert!(matches!(solve_subset_ilp(&p, &bad), Err(MatchError::InvalidOptions(_))));
    }

    #[test]
    fn pairing_partitions_controls() {
        let sol = MatchSolution::from_selection(vec![3, 1], vec![5, 2, 9, 0], 2, Certificate::ProvedOptimal, 1);
        assert_eq!(sol.pairing[&1], vec![0, 2]);
        assert_eq!(sol.pairing[&3], vec![5, 9]);
        assert_eq!(sol.objective, 4);
    }
}
