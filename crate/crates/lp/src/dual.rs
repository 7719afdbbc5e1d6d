//! Bounded-variable dual simplex.
//!
//! Every row gets a slack `s_i >= 0` so the working system is
//! `A x + s = b`. All variables are kept boxed: infinite bounds are replaced
//! by implied bounds where the row structure allows it and by artificial
//! bounds otherwise, which makes every basis dual feasible after choosing
//! the right bound for each nonbasic variable. No phase 1 is needed.
//!
//! Pricing uses dual steepest-edge weights; the ratio test is a bound
//! flipping ratio test with Harris tolerances. After a run of degenerate
//! pivots the solver switches to Bland's rule until the dual objective moves
//! again.

use crate::lu::BasisFactor;
use crate::{Basis, LpConfig, LpProblem, LpSolution, LpStatus};

const PIVOT_TOL: f64 = 1e-9;
/// Steepest-edge weights beyond this are treated as lost and reset.
const MAX_WEIGHT: f64 = 1e20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

/// Kind of bound a variable's box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoundKind {
    Given,
    Implied,
    Artificial,
}

pub(crate) struct DualSimplex<'a> {
    problem: &'a LpProblem,
    cfg: &'a LpConfig,
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    lo_kind: Vec<BoundKind>,
    hi_kind: Vec<BoundKind>,
    head: Vec<usize>,
    state: Vec<State>,
    x: Vec<f64>,
    d: Vec<f64>,
    weights: Vec<f64>,
    lu: BasisFactor,
    iterations: usize,
    work: Vec<f64>,
    bland: bool,
    degenerate_run: usize,
    degenerate_limit: usize,
    art_bound: f64,
}

enum Step {
    Optimal,
    Infeasible,
    Continue,
}

impl<'a> DualSimplex<'a> {
    pub fn new(problem: &'a LpProblem, cfg: &'a LpConfig) -> Self {
        let n = problem.num_vars();
        let m = problem.num_rows();
        let (col_start, col_rows, col_vals) = problem.to_columns();
        let nt = n + m;
        let mut cost = vec![0.0; nt];
        cost[..n].copy_from_slice(problem.objective());
        let mut lo = vec![0.0; nt];
        let mut hi = vec![f64::INFINITY; nt];
        lo[..n].copy_from_slice(problem.lower());
        hi[..n].copy_from_slice(problem.upper());
        let mut lo_kind = vec![BoundKind::Given; nt];
        let mut hi_kind = vec![BoundKind::Given; nt];
        for i in 0..m {
            // s_i = b_i - a_i.x <= b_i - min(a_i.x)
            let (cols, vals) = problem.row(i);
            let mut min_act = 0.0;
            for (&j, &a) in cols.iter().zip(vals) {
                min_act += if a > 0.0 { a * lo[j] } else { a * hi[j] };
            }
            let implied = problem.rhs()[i] - min_act;
            if implied.is_finite() {
                hi[n + i] = implied.max(0.0);
                hi_kind[n + i] = BoundKind::Implied;
            }
        }
        for j in 0..nt {
            if lo[j] == f64::NEG_INFINITY {
                lo_kind[j] = BoundKind::Artificial;
            }
            if hi[j] == f64::INFINITY {
                hi_kind[j] = BoundKind::Artificial;
            }
        }
        let degenerate_limit = cfg.degenerate_limit.unwrap_or_else(|| m.max(50));
        Self {
            problem,
            cfg,
            n,
            m,
            col_start,
            col_rows,
            col_vals,
            cost,
            lo,
            hi,
            lo_kind,
            hi_kind,
            head: (n..nt).collect(),
            state: (0..nt)
                .map(|j| if j >= n { State::Basic(j - n) } else { State::Lower })
                .collect(),
            x: vec![0.0; nt],
            d: vec![0.0; nt],
            weights: vec![1.0; m],
            lu: BasisFactor::default(),
            iterations: 0,
            work: vec![0.0; m],
            bland: false,
            degenerate_run: 0,
            degenerate_limit,
            art_bound: cfg.artificial_bound,
        }
    }

    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|t| (self.col_rows[t], self.col_vals[t]))
                .collect()
        } else {
            vec![(j - self.n, 1.0)]
        }
    }

    fn scatter_column(&self, j: usize, scale: f64, out: &mut [f64]) {
        if j < self.n {
            for t in self.col_start[j]..self.col_start[j + 1] {
                out[self.col_rows[t]] += scale * self.col_vals[t];
            }
        } else {
            out[j - self.n] += scale;
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|t| self.col_vals[t] * y[self.col_rows[t]])
                .sum()
        } else {
            y[j - self.n]
        }
    }

    fn artificial_bound(&self) -> f64 {
        self.art_bound
    }

    fn effective_lo(&self, j: usize) -> f64 {
        if self.lo_kind[j] == BoundKind::Artificial {
            -self.artificial_bound()
        } else {
            self.lo[j]
        }
    }

    fn effective_hi(&self, j: usize) -> f64 {
        if self.hi_kind[j] == BoundKind::Artificial {
            self.artificial_bound()
        } else {
            self.hi[j]
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            State::Lower => self.effective_lo(j),
            State::Upper => self.effective_hi(j),
            State::Zero => 0.0,
            State::Basic(_) => self.x[j],
        }
    }

    fn is_free(&self, j: usize) -> bool {
        self.lo_kind[j] == BoundKind::Artificial && self.hi_kind[j] == BoundKind::Artificial
    }

    /// Applies a basis hint, falling back to slacks for anything invalid.
    fn apply_hint(&mut self, hint: &Basis) {
        let nt = self.n + self.m;
        if hint.basic.len() != self.m || hint.at_upper.len() != nt {
            return;
        }
        let mut used = vec![false; nt];
        for &j in &hint.basic {
            if j >= nt || used[j] {
                return;
            }
            used[j] = true;
        }
        self.head = hint.basic.clone();
        for j in 0..nt {
            self.state[j] = if hint.at_upper[j] { State::Upper } else { State::Lower };
        }
        for (r, &j) in self.head.iter().enumerate() {
            self.state[j] = State::Basic(r);
        }
    }

    /// Factorizes the current basis, swapping in slacks for dependent
    /// columns.
    fn refactor(&mut self) {
        loop {
            let cols: Vec<Vec<(usize, f64)>> = self.head.iter().map(|&j| self.column(j)).collect();
            match BasisFactor::factorize(self.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    return;
                }
                Err(sing) => {
                    for (&pos, &row) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.head[pos];
                        let slack = self.n + row;
                        // The slack of an unpivoted row cannot already be basic:
                        // its unit column would have been pivoted.
                        self.state[out] = if self.x[out] >= self.effective_hi(out) {
                            State::Upper
                        } else {
                            State::Lower
                        };
                        if self.is_free(out) {
                            self.state[out] = State::Zero;
                        }
                        self.head[pos] = slack;
                        self.state[slack] = State::Basic(pos);
                    }
                }
            }
        }
    }

    fn compute_primal(&mut self) {
        let nt = self.n + self.m;
        let mut rhs: Vec<f64> = self.problem.rhs().to_vec();
        for j in 0..nt {
            if let State::Basic(_) = self.state[j] {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                self.scatter_column(j, -v, &mut rhs);
            }
        }
        self.lu.ftran(&mut rhs, &mut self.work);
        for (r, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[r];
        }
    }

    fn compute_duals(&mut self) -> Vec<f64> {
        let mut y: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        self.lu.btran(&mut y, &mut self.work);
        let nt = self.n + self.m;
        for j in 0..nt {
            self.d[j] = match self.state[j] {
                State::Basic(_) => 0.0,
                _ => self.cost[j] - self.dot_column(j, &y),
            };
        }
        y
    }

    /// Moves nonbasic variables to the bound their reduced cost asks for.
    /// Returns whether anything moved.
    fn fix_dual_infeasibilities(&mut self, initial: bool) -> bool {
        let tol = if initial { 0.0 } else { self.cfg.dual_tolerance };
        let mut moved = false;
        for j in 0..self.n + self.m {
            let dj = self.d[j];
            let want = match self.state[j] {
                State::Basic(_) => continue,
                _ if self.lo[j] == self.hi[j] => State::Lower,
                State::Lower if dj < -tol => State::Upper,
                State::Upper if dj > tol => State::Lower,
                State::Zero if dj > tol => State::Lower,
                State::Zero if dj < -tol => State::Upper,
                State::Lower | State::Upper if initial && self.is_free(j) && dj == 0.0 => {
                    State::Zero
                }
                s => s,
            };
            if want != self.state[j] {
                self.state[j] = want;
                moved = true;
            }
        }
        moved
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        let tol = self.cfg.primal_tolerance;
        let lo = self.effective_lo(j);
        let hi = self.effective_hi(j);
        if v < lo - tol {
            v - lo
        } else if v > hi + tol {
            v - hi
        } else {
            0.0
        }
    }

    fn choose_leaving(&self) -> Option<usize> {
        let mut best = None;
        let mut best_score = 0.0;
        let mut best_var = usize::MAX;
        for (r, &j) in self.head.iter().enumerate() {
            let inf = self.infeasibility(j);
            if inf == 0.0 {
                continue;
            }
            if self.bland {
                if j < best_var {
                    best_var = j;
                    best = Some(r);
                }
            } else {
                let score = inf * inf / self.weights[r];
                if score > best_score {
                    best_score = score;
                    best = Some(r);
                }
            }
        }
        best
    }

    /// Row `r` of `B^-1 N` for all nonbasic variables, given `rho = e_r' B^-1`.
    fn pivot_row(&self, rho: &[f64], alpha: &mut [f64]) {
        alpha.iter_mut().for_each(|a| *a = 0.0);
        for (i, &ri) in rho.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            let (cols, vals) = self.problem.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                alpha[j] += ri * a;
            }
            alpha[self.n + i] = ri;
        }
    }

    fn iterate(&mut self) -> Step {
        let Some(r) = self.choose_leaving() else {
            return Step::Optimal;
        };
        let m = self.m;
        let nt = self.n + self.m;
        let p = self.head[r];
        let to_upper = self.x[p] > self.effective_hi(p);
        let bound = if to_upper { self.effective_hi(p) } else { self.effective_lo(p) };
        let delta = self.x[p] - bound;

        let mut rho = vec![0.0; m];
        rho[r] = 1.0;
        self.lu.btran(&mut rho, &mut self.work);
        let mut alpha_row = vec![0.0; nt];
        self.pivot_row(&rho, &mut alpha_row);

        // Ratio test candidates: (var, ratio, |alpha|).
        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for j in 0..nt {
            let st = self.state[j];
            if matches!(st, State::Basic(_)) || self.lo[j] == self.hi[j] {
                continue;
            }
            let a = alpha_row[j];
            if a.abs() < PIVOT_TOL {
                continue;
            }
            // Sign of alpha that lets x_j move in its feasible direction
            // while pushing x_p towards its bound.
            let s = if to_upper { a } else { -a };
            let eligible = match st {
                State::Lower => s > 0.0,
                State::Upper => s < 0.0,
                State::Zero => true,
                State::Basic(_) => false,
            };
            if !eligible {
                continue;
            }
            let dj = match st {
                State::Lower => self.d[j].max(0.0),
                State::Upper => (-self.d[j]).max(0.0),
                _ => self.d[j].abs(),
            };
            cands.push((j, dj / a.abs(), a.abs()));
        }
        if cands.is_empty() {
            return Step::Infeasible;
        }

        let (q, flips) = if self.bland {
            let tmin = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let q = cands
                .iter()
                .filter(|c| c.1 <= tmin + 1e-12 * (1.0 + tmin))
                .map(|c| c.0)
                .min()
                .expect("nonempty");
            (q, Vec::new())
        } else {
            match self.bound_flipping(&mut cands, delta.abs()) {
                Some(res) => res,
                None => return Step::Infeasible,
            }
        };

        let alpha_rq = alpha_row[q];
        let mut alpha_q = vec![0.0; m];
        self.scatter_column(q, 1.0, &mut alpha_q);
        self.lu.ftran(&mut alpha_q, &mut self.work);
        let diff = (alpha_q[r] - alpha_rq).abs();
        if diff > 1e-8 * (1.0 + alpha_rq.abs()) && self.lu.num_updates() > 0 {
            // Accumulated error in the eta file; rebuild and retry.
            self.reinvert();
            return Step::Continue;
        }

        if !flips.is_empty() {
            let mut delta_b = vec![0.0; m];
            for &j in &flips {
                let (from, to, st) = match self.state[j] {
                    State::Lower => (self.effective_lo(j), self.effective_hi(j), State::Upper),
                    _ => (self.effective_hi(j), self.effective_lo(j), State::Lower),
                };
                self.state[j] = st;
                self.x[j] = to;
                self.scatter_column(j, to - from, &mut delta_b);
            }
            self.lu.ftran(&mut delta_b, &mut self.work);
            for (i, &jb) in self.head.iter().enumerate() {
                self.x[jb] -= delta_b[i];
            }
        }

        let theta_p = (self.x[p] - bound) / alpha_q[r];
        for (i, &jb) in self.head.iter().enumerate() {
            self.x[jb] -= theta_p * alpha_q[i];
        }
        self.x[q] += theta_p;
        self.x[p] = bound;

        let theta_d = self.d[q] / alpha_rq;
        for j in 0..nt {
            if !matches!(self.state[j], State::Basic(_)) && alpha_row[j] != 0.0 {
                self.d[j] -= theta_d * alpha_row[j];
            }
        }
        self.d[p] = -theta_d;
        self.d[q] = 0.0;

        // Dual steepest-edge weights.
        let mut tau = rho.clone();
        self.lu.ftran(&mut tau, &mut self.work);
        let wr = self.weights[r];
        let ar = alpha_q[r];
        for i in 0..m {
            if i == r || alpha_q[i] == 0.0 {
                continue;
            }
            let ratio = alpha_q[i] / ar;
            let w = self.weights[i] - 2.0 * ratio * tau[i] + ratio * ratio * wr;
            self.weights[i] = w.max(ratio * ratio).max(1e-8);
        }
        self.weights[r] = (wr / (ar * ar)).max(1e-8);
        if self.weights.iter().any(|w| !(*w <= MAX_WEIGHT)) {
            self.weights.iter_mut().for_each(|w| *w = 1.0);
        }

        self.head[r] = q;
        self.state[q] = State::Basic(r);
        self.state[p] = if to_upper { State::Upper } else { State::Lower };
        self.lu.update(r, &alpha_q);

        if (theta_d * delta).abs() <= 1e-12 {
            self.degenerate_run += 1;
            if self.degenerate_run >= self.degenerate_limit {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
        Step::Continue
    }

    /// Bound flipping ratio test with Harris tolerances. Returns the entering
    /// variable and the variables to flip, or `None` when the dual ray is
    /// unbounded (primal infeasible).
    fn bound_flipping(
        &self,
        cands: &mut [(usize, f64, f64)],
        mut slope: f64,
    ) -> Option<(usize, Vec<usize>)> {
        cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let tol = self.cfg.dual_tolerance;
        let mut flips = Vec::new();
        let mut k = 0;
        while k < cands.len() {
            // Harris bound over the remaining candidates.
            let bound = cands[k..]
                .iter()
                .map(|c| c.1 + tol / c.2)
                .fold(f64::INFINITY, f64::min);
            let end = k + cands[k..].iter().take_while(|c| c.1 <= bound).count();
            let mut reduction = 0.0;
            for c in &cands[k..end] {
                let j = c.0;
                let range = if self.lo_kind[j] == BoundKind::Artificial
                    || self.hi_kind[j] == BoundKind::Artificial
                {
                    f64::INFINITY
                } else {
                    self.hi[j] - self.lo[j]
                };
                reduction += c.2 * range;
            }
            if slope - reduction >= 0.0 && end < cands.len() {
                slope -= reduction;
                flips.extend(cands[k..end].iter().map(|c| c.0));
                k = end;
                continue;
            }
            if slope - reduction >= 0.0 {
                // Every remaining breakpoint can be flipped: dual unbounded.
                return None;
            }
            let q = cands[k..end]
                .iter()
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
                .expect("nonempty group")
                .0;
            return Some((q, flips));
        }
        None
    }

    fn reinvert(&mut self) {
        self.refactor();
        self.compute_primal();
        self.compute_duals();
        if self.fix_dual_infeasibilities(false) {
            self.compute_primal();
        }
    }

    fn start(&mut self, hint: Option<&Basis>) {
        if let Some(h) = hint {
            self.apply_hint(h);
        }
        self.refactor();
        self.compute_duals();
        self.fix_dual_infeasibilities(true);
        self.compute_primal();
    }

    pub fn solve(mut self, hint: Option<&Basis>) -> LpSolution {
        self.start(hint);
        let mut escalations = 0;
        let status = loop {
            if self.iterations >= self.cfg.max_iterations {
                break LpStatus::IterationLimit;
            }
            if self.lu.num_updates() >= self.cfg.refactor_interval
                || self.lu.eta_nnz() > 2 * self.lu.factor_nnz()
            {
                self.reinvert();
            }
            match self.iterate() {
                Step::Continue => self.iterations += 1,
                Step::Infeasible => {
                    // Confirm on a fresh factorization before giving up.
                    if self.lu.num_updates() > 0 {
                        self.reinvert();
                        continue;
                    }
                    break LpStatus::Infeasible;
                }
                Step::Optimal => {
                    if self.lu.num_updates() > 0 {
                        self.reinvert();
                        if self.choose_leaving().is_some() {
                            continue;
                        }
                    }
                    if self.at_artificial_bound() {
                        if escalations >= 2 {
                            break LpStatus::Unbounded;
                        }
                        escalations += 1;
                        self.escalate_artificial();
                        continue;
                    }
                    break LpStatus::Optimal;
                }
            }
        };
        self.finish(status)
    }

    fn at_artificial_bound(&self) -> bool {
        (0..self.n + self.m).any(|j| match self.state[j] {
            State::Lower => {
                self.lo_kind[j] == BoundKind::Artificial && self.d[j].abs() > self.cfg.dual_tolerance
            }
            State::Upper => {
                self.hi_kind[j] == BoundKind::Artificial && self.d[j].abs() > self.cfg.dual_tolerance
            }
            _ => false,
        })
    }

    fn escalate_artificial(&mut self) {
        self.art_bound *= 1e3;
        self.reinvert();
    }

    fn finish(self, status: LpStatus) -> LpSolution {
        let n = self.n;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = self.problem.objective_value(&x);
        let mut y: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        let mut work = vec![0.0; self.m];
        if status == LpStatus::Optimal && self.m > 0 {
            self.lu.btran(&mut y, &mut work);
            // A positive dual belongs to a slack resting on its implied bound
            // (or is Harris noise); every variable in such a row already sits
            // at its limiting bound, so zero is an equally valid dual.
            y.iter_mut().for_each(|v| *v = v.min(0.0));
        } else {
            y = vec![0.0; self.m];
        }
        let basis = Basis {
            basic: self.head.clone(),
            at_upper: self.state.iter().map(|s| *s == State::Upper).collect(),
        };
        LpSolution {
            status,
            x,
            objective,
            // A x + s = b gives duals of the `<=` rows with the sign
            // convention  c - A'y = d,  y <= 0.
            duals: y,
            iterations: self.iterations,
            basis: Some(basis),
        }
    }
}
