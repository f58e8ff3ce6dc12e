//! Dense bounded-variable simplex.
//!
//! Solves `min c'x  s.t.  a_i'x {<=,=,>=} b_i,  lo <= x <= hi` with a
//! tableau kept as `B⁻¹A`. Every row gets a slack column and a reserved
//! artificial column, so the working column set is `n + 2m` wide. Phase one
//! minimises the artificials; phase two the user objective. A dual simplex
//! re-optimises after bound changes, which is what branch-and-bound needs.

use std::fmt;

const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Linear program over bounded structural variables.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LpProblem {
    pub fn new(n: usize) -> Self {
        LpProblem {
            cost: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n_vars());
        self.rows.push(Row { coeffs, sense, rhs });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpError {
    Singular,
    NotDualFeasible,
    IterationLimit,
    Unbounded,
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Singular => f.write_str("basis matrix became singular"),
            LpError::NotDualFeasible => f.write_str("warm basis is not dual feasible"),
            LpError::IterationLimit => f.write_str("simplex iteration limit reached"),
            LpError::Unbounded => f.write_str("linear program is unbounded"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Snapshot of a basis that can seed a later solve.
#[derive(Debug, Clone)]
pub struct Basis {
    basic: Vec<usize>,
    at_upper: Vec<bool>,
}

/// Simplex working state for one problem. Structural bounds may be changed
/// between solves with [`Simplex::set_bounds`].
#[derive(Clone)]
pub struct Simplex {
    m: usize,
    n: usize,
    ncols: usize,
    /// Original constraint matrix including slack and artificial columns.
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    tab: Vec<f64>,
    beta: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    pivots_since_refactor: usize,
    max_iter: usize,
    phase_one: bool,
}

impl Simplex {
    pub fn new(problem: &LpProblem) -> Self {
        let m = problem.rows.len();
        let n = problem.n_vars();
        let ncols = n + 2 * m;
        let mut a = vec![0.0; m * ncols];
        let mut lo = vec![0.0; ncols];
        let mut hi = vec![0.0; ncols];
        lo[..n].copy_from_slice(&problem.lower);
        hi[..n].copy_from_slice(&problem.upper);
        let mut b = vec![0.0; m];
        for (i, row) in problem.rows.iter().enumerate() {
            a[i * ncols..i * ncols + n].copy_from_slice(&row.coeffs);
            a[i * ncols + n + i] = 1.0;
            a[i * ncols + n + m + i] = 1.0;
            b[i] = row.rhs;
            let (l, h) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo[n + i] = l;
            hi[n + i] = h;
        }
        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&problem.cost);
        Simplex {
            m,
            n,
            ncols,
            a,
            b,
            cost,
            lo,
            hi,
            tab: vec![0.0; m * ncols],
            beta: vec![0.0; m],
            d: vec![0.0; ncols],
            basis: (n..n + m).collect(),
            state: vec![VarState::AtLower; ncols],
            pivots_since_refactor: 0,
            max_iter: 50 * (ncols + m) + 10_000,
            phase_one: false,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.lo[j]
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.hi[j]
    }

    /// Changes the bounds of structural variable `j`. The current basis is
    /// kept; call [`Simplex::reoptimize`] afterwards.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        assert!(j < self.n);
        self.lo[j] = lo;
        self.hi[j] = hi;
        if let VarState::AtUpper = self.state[j] {
            if !hi.is_finite() {
                self.state[j] = VarState::AtLower;
            }
        }
        if let VarState::AtLower = self.state[j] {
            if !lo.is_finite() {
                self.state[j] = VarState::AtUpper;
            }
        }
    }

    pub fn basis(&self) -> Basis {
        Basis {
            basic: self.basis.clone(),
            at_upper: self.state.iter().map(|s| matches!(s, VarState::AtUpper)).collect(),
        }
    }

    /// Structural variable values of the current basic solution.
    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.value(j)).collect()
    }

    /// User objective at the current basic solution.
    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.value(j)).sum()
    }

    fn value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::Basic(r) => self.beta[r],
            VarState::AtLower => self.lo[j],
            VarState::AtUpper => self.hi[j],
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtUpper => self.hi[j],
            _ => {
                if self.lo[j].is_finite() {
                    self.lo[j]
                } else {
                    0.0
                }
            }
        }
    }

    fn phase_cost(&self, j: usize) -> f64 {
        if self.phase_one {
            if j >= self.n + self.m {
                1.0
            } else {
                0.0
            }
        } else {
            self.cost[j]
        }
    }

    /// Rebuilds `B⁻¹A`, basic values and reduced costs from the basis.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let nc = self.ncols;
        // Gauss-Jordan on [B | I].
        let mut bmat = vec![0.0; m * m];
        for (k, &col) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + k] = self.a[i * nc + col];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = bmat[col * m + col].abs();
            for r in col + 1..m {
                let v = bmat[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(LpError::Singular);
            }
            if piv != col {
                for k in 0..m {
                    bmat.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let p = bmat[col * m + col];
            for k in 0..m {
                bmat[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = bmat[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        bmat[r * m + k] -= f * bmat[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        // tab = inv * A
        self.tab.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            for k in 0..m {
                let f = inv[i * m + k];
                if f == 0.0 {
                    continue;
                }
                let (src, dst) = (&self.a[k * nc..(k + 1) * nc], &mut self.tab[i * nc..(i + 1) * nc]);
                for (t, s) in dst.iter_mut().zip(src) {
                    *t += f * s;
                }
            }
        }
        for j in 0..nc {
            if !matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            self.state[j] = VarState::AtLower;
        }
        for (r, &col) in self.basis.iter().enumerate() {
            self.state[col] = VarState::Basic(r);
        }
        self.recompute_beta(&inv);
        self.recompute_duals();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn recompute_beta(&mut self, inv: &[f64]) {
        let m = self.m;
        let nc = self.ncols;
        let mut rhs = self.b.clone();
        for j in 0..nc {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let x = self.nonbasic_value(j);
            if x != 0.0 {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.a[i * nc + j] * x;
                }
            }
        }
        for i in 0..m {
            self.beta[i] = (0..m).map(|k| inv[i * m + k] * rhs[k]).sum();
        }
    }

    fn recompute_duals(&mut self) {
        let nc = self.ncols;
        for j in 0..nc {
            self.d[j] = self.phase_cost(j);
        }
        for (i, &col) in self.basis.iter().enumerate() {
            let cb = self.phase_cost(col);
            if cb != 0.0 {
                for j in 0..nc {
                    self.d[j] -= cb * self.tab[i * nc + j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let p = self.tab[r * nc + q];
        for v in &mut self.tab[r * nc..(r + 1) * nc] {
            *v /= p;
        }
        let prow: Vec<f64> = self.tab[r * nc..(r + 1) * nc].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * nc + q];
            if f != 0.0 {
                let row = &mut self.tab[i * nc..(i + 1) * nc];
                for (t, s) in row.iter_mut().zip(&prow) {
                    *t -= f * s;
                }
                row[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (t, s) in self.d.iter_mut().zip(&prow) {
                *t -= f * s;
            }
            self.d[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.basis[r] = q;
        self.state[q] = VarState::Basic(r);
        // Caller sets the leaving variable's bound status.
        self.state[leaving] = VarState::AtLower;
        self.pivots_since_refactor += 1;
    }

    fn maybe_refactor(&mut self) -> Result<(), LpError> {
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn primal(&mut self) -> Result<(), LpError> {
        let nc = self.ncols;
        let mut bland = false;
        let mut degenerate = 0usize;
        for _ in 0..self.max_iter {
            // Pricing.
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..nc {
                let dir = match self.state[j] {
                    VarState::Basic(_) => continue,
                    _ if self.lo[j] == self.hi[j] => continue,
                    VarState::AtLower if self.d[j] < -DUAL_TOL => 1.0,
                    VarState::AtUpper if self.d[j] > DUAL_TOL => -1.0,
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                let score = self.d[j].abs();
                if score > best {
                    best = score;
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return Ok(());
            };

            // Ratio test.
            let mut theta = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_pivot = 0.0;
            for i in 0..self.m {
                let alpha = self.tab[i * nc + q];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let col = self.basis[i];
                let rate = -dir * alpha;
                let (limit, to_upper) = if rate < 0.0 {
                    if !self.lo[col].is_finite() {
                        continue;
                    }
                    (((self.beta[i] - self.lo[col]) / -rate).max(0.0), false)
                } else {
                    if !self.hi[col].is_finite() {
                        continue;
                    }
                    (((self.hi[col] - self.beta[i]) / rate).max(0.0), true)
                };
                let better = if limit < theta - 1e-12 {
                    true
                } else if limit <= theta + 1e-12 {
                    match leave {
                        Some((li, _)) if bland => self.basis[i] < self.basis[li],
                        Some(_) => alpha.abs() > leave_pivot,
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    theta = limit;
                    leave = Some((i, to_upper));
                    leave_pivot = alpha.abs();
                }
            }
            if !theta.is_finite() {
                return Err(LpError::Unbounded);
            }
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }

            for i in 0..self.m {
                let alpha = self.tab[i * nc + q];
                if alpha != 0.0 {
                    self.beta[i] -= dir * theta * alpha;
                }
            }
            match leave {
                None => {
                    // Bound flip.
                    self.state[q] = if dir > 0.0 { VarState::AtUpper } else { VarState::AtLower };
                }
                Some((r, to_upper)) => {
                    let entering_value = self.nonbasic_value(q) + dir * theta;
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.beta[r] = entering_value;
                    self.state[leaving] = if to_upper { VarState::AtUpper } else { VarState::AtLower };
                    self.maybe_refactor()?;
                }
            }
        }
        Err(LpError::IterationLimit)
    }

    /// Dual simplex from a dual-feasible basis. Returns `Infeasible` when a
    /// row proves primal infeasibility.
    fn dual(&mut self) -> Result<LpStatus, LpError> {
        let nc = self.ncols;
        for _ in 0..self.max_iter {
            let mut leave: Option<(usize, bool)> = None;
            let mut worst = 0.0;
            for i in 0..self.m {
                let col = self.basis[i];
                let below = self.lo[col] - self.beta[i];
                let above = self.beta[i] - self.hi[col];
                if below > FEAS_TOL * (1.0 + self.lo[col].abs()) && below > worst {
                    worst = below;
                    leave = Some((i, false));
                } else if above > FEAS_TOL * (1.0 + self.hi[col].abs()) && above > worst {
                    worst = above;
                    leave = Some((i, true));
                }
            }
            let Some((r, to_upper)) = leave else {
                return Ok(LpStatus::Optimal);
            };
            let col_r = self.basis[r];
            let target = if to_upper { self.hi[col_r] } else { self.lo[col_r] };

            let mut enter: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_alpha = 0.0;
            for j in 0..nc {
                let at_upper = match self.state[j] {
                    VarState::Basic(_) => continue,
                    _ if self.lo[j] == self.hi[j] => continue,
                    VarState::AtLower => false,
                    VarState::AtUpper => true,
                };
                let alpha = self.tab[r * nc + j];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                // x_r moves by -alpha * dx_j.
                let eligible = match (to_upper, at_upper) {
                    (false, false) => alpha < 0.0,
                    (false, true) => alpha > 0.0,
                    (true, false) => alpha > 0.0,
                    (true, true) => alpha < 0.0,
                };
                if !eligible {
                    continue;
                }
                let ratio = (self.d[j] / alpha).abs();
                if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && alpha.abs() > best_alpha) {
                    best_ratio = ratio;
                    best_alpha = alpha.abs();
                    enter = Some(j);
                }
            }
            let Some(q) = enter else {
                return Ok(LpStatus::Infeasible);
            };
            let alpha_rq = self.tab[r * nc + q];
            let dx = (self.beta[r] - target) / alpha_rq;
            for i in 0..self.m {
                let alpha = self.tab[i * nc + q];
                if alpha != 0.0 {
                    self.beta[i] -= alpha * dx;
                }
            }
            let entering_value = self.nonbasic_value(q) + dx;
            self.pivot(r, q);
            self.beta[r] = entering_value;
            self.state[col_r] = if to_upper { VarState::AtUpper } else { VarState::AtLower };
            self.maybe_refactor()?;
        }
        Err(LpError::IterationLimit)
    }

    /// Cold two-phase solve from the slack basis.
    pub fn solve(&mut self) -> Result<LpStatus, LpError> {
        let (m, n, nc) = (self.m, self.n, self.ncols);
        for j in 0..nc {
            self.state[j] = if self.lo[j].is_finite() || !self.hi[j].is_finite() {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
        }
        // Residual of each row with every structural at its starting bound.
        let mut resid = self.b.clone();
        for j in 0..n {
            let x = self.nonbasic_value(j);
            if x != 0.0 {
                for (i, r) in resid.iter_mut().enumerate() {
                    *r -= self.a[i * nc + j] * x;
                }
            }
        }
        let mut need_phase_one = false;
        for i in 0..m {
            let (s, art) = (n + i, n + m + i);
            self.lo[art] = 0.0;
            self.hi[art] = 0.0;
            self.a[i * nc + art] = 1.0;
            if resid[i] >= self.lo[s] - FEAS_TOL && resid[i] <= self.hi[s] + FEAS_TOL {
                self.basis[i] = s;
                continue;
            }
            // Slack sits at its nearest bound; the artificial carries the rest.
            let clamp = resid[i].clamp(self.lo[s], self.hi[s]);
            self.state[s] = if clamp == self.hi[s] && self.hi[s] != self.lo[s] {
                VarState::AtUpper
            } else {
                VarState::AtLower
            };
            let sign = if resid[i] - clamp >= 0.0 { 1.0 } else { -1.0 };
            self.a[i * nc + art] = sign;
            self.hi[art] = f64::INFINITY;
            self.basis[i] = art;
            need_phase_one = true;
        }
        if need_phase_one {
            self.phase_one = true;
            self.refactor()?;
            self.primal()?;
            let infeas: f64 = (0..m).map(|i| self.value(n + m + i)).sum();
            self.phase_one = false;
            if infeas > 1e-7 * (1.0 + resid.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
                for i in 0..m {
                    self.hi[n + m + i] = 0.0;
                }
                return Ok(LpStatus::Infeasible);
            }
            for i in 0..m {
                self.hi[n + m + i] = 0.0;
            }
            self.drive_out_artificials();
        }
        self.refactor()?;
        self.primal()?;
        Ok(LpStatus::Optimal)
    }

    fn drive_out_artificials(&mut self) {
        let (m, n, nc) = (self.m, self.n, self.ncols);
        for r in 0..m {
            if self.basis[r] < n + m {
                continue;
            }
            let mut best: Option<usize> = None;
            let mut best_abs = 1e-7;
            for j in 0..n + m {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                let v = self.tab[r * nc + j].abs();
                if v > best_abs {
                    best_abs = v;
                    best = Some(j);
                }
            }
            if let Some(q) = best {
                // Degenerate pivot: the artificial is at zero.
                let value = self.nonbasic_value(q);
                let leaving = self.basis[r];
                let dx = self.beta[r] / self.tab[r * nc + q];
                for i in 0..m {
                    let alpha = self.tab[i * nc + q];
                    if alpha != 0.0 {
                        self.beta[i] -= alpha * dx;
                    }
                }
                self.pivot(r, q);
                self.beta[r] = value + dx;
                self.state[leaving] = VarState::AtLower;
            }
        }
    }

    /// Re-optimises after bound changes, starting from `warm` (or the
    /// current basis) and falling back to a cold solve when the warm basis
    /// is unusable.
    pub fn reoptimize(&mut self, warm: Option<&Basis>) -> Result<LpStatus, LpError> {
        if let Some(w) = warm {
            self.basis.clone_from(&w.basic);
            for (j, &up) in w.at_upper.iter().enumerate() {
                self.state[j] = if up { VarState::AtUpper } else { VarState::AtLower };
            }
        }
        match self.try_warm() {
            Ok(status) => Ok(status),
            Err(_) => self.solve(),
        }
    }

    fn try_warm(&mut self) -> Result<LpStatus, LpError> {
        self.phase_one = false;
        for j in 0..self.ncols {
            if !self.lo[j].is_finite() && matches!(self.state[j], VarState::AtLower) {
                self.state[j] = VarState::AtUpper;
            }
            if !self.hi[j].is_finite() && matches!(self.state[j], VarState::AtUpper) {
                self.state[j] = VarState::AtLower;
            }
        }
        self.refactor()?;
        // Restore dual feasibility by bound flips on boxed variables.
        let mut flipped = false;
        for j in 0..self.ncols {
            match self.state[j] {
                VarState::AtLower if self.d[j] < -DUAL_TOL && self.lo[j] != self.hi[j] => {
                    if !self.hi[j].is_finite() {
                        return Err(LpError::NotDualFeasible);
                    }
                    self.state[j] = VarState::AtUpper;
                    flipped = true;
                }
                VarState::AtUpper if self.d[j] > DUAL_TOL && self.lo[j] != self.hi[j] => {
                    if !self.lo[j].is_finite() {
                        return Err(LpError::NotDualFeasible);
                    }
                    self.state[j] = VarState::AtLower;
                    flipped = true;
                }
                _ => {}
            }
        }
        if flipped {
            self.refactor()?;
        }
        match self.dual()? {
            LpStatus::Infeasible => Ok(LpStatus::Infeasible),
            LpStatus::Optimal => {
                // Clean up any residual dual infeasibility.
                self.primal()?;
                Ok(LpStatus::Optimal)
            }
        }
    }
}
