//! Best-bound branch-and-bound for 0/1 programs.
//!
//! Nodes are expanded in order of (LP bound, creation index); the branching
//! variable is the most fractional one with ties going to the lowest index.
//! Each node re-optimises from its parent's basis with the dual simplex. A
//! fractional dive at the root supplies an early incumbent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{Basis, LpError, LpProblem, LpStatus, Simplex};

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub integrality_tolerance: f64,
    pub node_limit: usize,
    /// Objective takes integer values at every integer point, so a node
    /// can be pruned once its bound cannot beat the incumbent by one.
    pub integral_objective: bool,
    /// Run a dive every this many nodes (0 disables periodic dives).
    pub dive_every: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            integrality_tolerance: 1e-6,
            node_limit: 100_000,
            integral_objective: true,
            dive_every: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Incumbent {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub enum MipOutcome {
    Optimal { best: Incumbent, nodes: usize },
    Infeasible { nodes: usize },
    NodeLimit { best: Option<Incumbent>, nodes: usize },
}

struct Node {
    bound: f64,
    id: usize,
    fixings: Vec<(usize, f64, f64)>,
    warm: Basis,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node,
    // must compare greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(other.id.cmp(&self.id))
    }
}

/// Minimises `problem` with every structural variable restricted to
/// integers. `accept` re-checks a rounded integer point against the exact
/// model and may reject it. `repair` turns a fractional LP point into a
/// candidate integer point; it runs at the root and before each dive.
pub fn solve_binary_program<F, R>(
    problem: &LpProblem,
    opts: &MipOptions,
    seed: Option<Incumbent>,
    accept: F,
    repair: R,
) -> Result<MipOutcome, LpError>
where
    F: Fn(&[f64]) -> bool,
    R: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut root = Simplex::new(problem);
    let base_lo: Vec<f64> = problem.lower.clone();
    let base_hi: Vec<f64> = problem.upper.clone();
    let mut incumbent = seed;
    let mut nodes = 0usize;

    if root.solve()? == LpStatus::Infeasible {
        return Ok(MipOutcome::Infeasible { nodes: 1 });
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(Node { bound: root.objective(), id: next_id, fixings: Vec::new(), warm: root.basis() });
    next_id += 1;
    let mut first = true;

    while let Some(node) = heap.pop() {
        if pruned(node.bound, incumbent.as_ref(), opts) {
            continue;
        }
        if nodes >= opts.node_limit {
            return Ok(MipOutcome::NodeLimit { best: incumbent, nodes });
        }
        nodes += 1;

        let mut lp = if first { root.clone() } else { root_with(&root, &base_lo, &base_hi, &node.fixings) };
        let status = if first {
            LpStatus::Optimal
        } else {
            lp.reoptimize(Some(&node.warm))?
        };
        if status == LpStatus::Infeasible {
            continue;
        }
        let bound = lp.objective();
        if pruned(bound, incumbent.as_ref(), opts) {
            continue;
        }
        let x = lp.values();
        match most_fractional(&x, opts.integrality_tolerance) {
            None => {
                let xr: Vec<f64> = x.iter().map(|v| v.round()).collect();
                if accept(&xr) {
                    let obj = objective(problem, &xr);
                    if incumbent.as_ref().is_none_or(|inc| obj < inc.objective) {
                        incumbent = Some(Incumbent { x: xr, objective: obj });
                    }
                }
                continue;
            }
            Some(j) => {
                if first || (opts.dive_every > 0 && nodes.is_multiple_of(opts.dive_every)) {
                    let repaired = repair(&x).filter(|xr| accept(xr)).map(|xr| Incumbent { objective: objective(problem, &xr), x: xr });
                    let found = match repaired {
                        Some(r) if !pruned(bound, Some(&r), opts) => dive(&lp, problem, opts, &accept).filter(|d| d.objective < r.objective).or(Some(r)),
                        Some(r) => Some(r),
                        None => dive(&lp, problem, opts, &accept),
                    };
                    if let Some(found) = found {
                        if incumbent.as_ref().is_none_or(|inc| found.objective < inc.objective) {
                            incumbent = Some(found);
                        }
                        if pruned(bound, incumbent.as_ref(), opts) {
                            first = false;
                            continue;
                        }
                    }
                }
                first = false;
                let warm = lp.basis();
                let v = x[j];
                let mut down = node.fixings.clone();
                down.push((j, lp.lower(j), v.floor()));
                let mut up = node.fixings;
                up.push((j, v.ceil(), lp.upper(j)));
                heap.push(Node { bound, id: next_id, fixings: down, warm: warm.clone() });
                heap.push(Node { bound, id: next_id + 1, fixings: up, warm });
                next_id += 2;
            }
        }
    }

    Ok(match incumbent {
        Some(best) => MipOutcome::Optimal { best, nodes },
        None => MipOutcome::Infeasible { nodes },
    })
}

fn root_with(root: &Simplex, base_lo: &[f64], base_hi: &[f64], fixings: &[(usize, f64, f64)]) -> Simplex {
    let mut lp = root.clone();
    for j in 0..lp.n_vars() {
        if lp.lower(j) != base_lo[j] || lp.upper(j) != base_hi[j] {
            lp.set_bounds(j, base_lo[j], base_hi[j]);
        }
    }
    for &(j, lo, hi) in fixings {
        lp.set_bounds(j, lo, hi);
    }
    lp
}

fn objective(problem: &LpProblem, x: &[f64]) -> f64 {
    problem.cost.iter().zip(x).map(|(c, v)| c * v).sum()
}

fn pruned(bound: f64, incumbent: Option<&Incumbent>, opts: &MipOptions) -> bool {
    let Some(inc) = incumbent else {
        return false;
    };
    if opts.integral_objective {
        // An improving integer point must be at least one better.
        (bound - 1e-6).ceil() > inc.objective - 1.0 + 1e-9
    } else {
        bound >= inc.objective - 1e-9 * inc.objective.abs().max(1.0)
    }
}

fn most_fractional(x: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut best_frac = tol;
    for (j, &v) in x.iter().enumerate() {
        let f = (v - v.floor()).min(v.ceil() - v);
        if f > best_frac + 1e-12 {
            best_frac = f;
            best = Some(j);
        }
    }
    best
}

/// Repeatedly fixes the least fractional variable to its nearest integer,
/// trying the other side once if that fails.
fn dive<F>(start: &Simplex, problem: &LpProblem, opts: &MipOptions, accept: &F) -> Option<Incumbent>
where
    F: Fn(&[f64]) -> bool,
{
    let mut lp = start.clone();
    let n = lp.n_vars();
    for _ in 0..=n {
        let x = lp.values();
        let mut pick: Option<(usize, f64)> = None;
        let mut best = f64::INFINITY;
        for (j, &v) in x.iter().enumerate() {
            let f = (v - v.floor()).min(v.ceil() - v);
            if f > opts.integrality_tolerance && f < best {
                best = f;
                pick = Some((j, v));
            }
        }
        let Some((j, v)) = pick else {
            let xr: Vec<f64> = x.iter().map(|v| v.round()).collect();
            if accept(&xr) {
                let obj = objective(problem, &xr);
                return Some(Incumbent { x: xr, objective: obj });
            }
            return None;
        };
        let (lo, hi) = (lp.lower(j), lp.upper(j));
        let near = v.round();
        let far = if near > v { v.floor() } else { v.ceil() };
        let basis = lp.basis();
        let mut trial = lp.clone();
        trial.set_bounds(j, near, near);
        match trial.reoptimize(Some(&basis)) {
            Ok(LpStatus::Optimal) => lp = trial,
            _ => {
                let mut other = lp.clone();
                other.set_bounds(j, far.max(lo), far.min(hi));
                match other.reoptimize(Some(&basis)) {
                    Ok(LpStatus::Optimal) => lp = other,
                    _ => return None,
                }
            }
        }
    }
    None
}
