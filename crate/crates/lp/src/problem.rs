use crate::LpError;

/// A linear program in inequality form:
///
/// ```text
/// minimize    c'x
/// subject to  A x <= b
///             lo <= x <= hi
/// ```
///
/// Rows are stored sparse (CSR). Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    row_starts: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    rhs: Vec<f64>,
}

impl LpProblem {
    /// Creates a problem with `num_vars` variables, zero objective, no rows
    /// and the conventional default bounds `[0, +inf)`.
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            row_starts: vec![0],
            row_cols: Vec::new(),
            row_vals: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.row_vals.len()
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Appends the row `sum(coef * x[var]) <= rhs` and returns its index.
    ///
    /// Repeated variables are merged by summing their coefficients, exact
    /// zeros are dropped and entries are stored in column order.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let start = self.row_cols.len();
        for &(var, coef) in coeffs {
            if coef == 0.0 {
                continue;
            }
            match self.row_cols[start..].iter().position(|&c| c == var) {
                Some(k) => self.row_vals[start + k] += coef,
                None => {
                    self.row_cols.push(var);
                    self.row_vals.push(coef);
                }
            }
        }
        let mut entries: Vec<(usize, f64)> = self.row_cols[start..]
            .iter()
            .copied()
            .zip(self.row_vals[start..].iter().copied())
            .filter(|&(_, a)| a != 0.0)
            .collect();
        entries.sort_by_key(|&(j, _)| j);
        self.row_cols.truncate(start);
        self.row_vals.truncate(start);
        for (j, a) in entries {
            self.row_cols.push(j);
            self.row_vals.push(a);
        }
        self.row_starts.push(self.row_cols.len());
        self.rhs.push(rhs);
        self.rhs.len() - 1
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        self.rhs[row] = rhs;
    }

    /// Column indices and coefficients of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_starts[i], self.row_starts[i + 1]);
        (&self.row_cols[s..e], &self.row_vals[s..e])
    }

    /// Value of `a_i . x` for row `i`.
    pub fn row_activity(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&j, &a)| a * x[j]).sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks the structural invariants: finite coefficients, `lo <= hi`,
    /// no NaN bounds, in-range column indices and no empty rows.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
            {
                return Err(LpError::InvalidProblem(format!(
                    "variable {j} has invalid bounds [{lo}, {hi}]"
                )));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::InvalidProblem(format!(
                    "objective coefficient of variable {j} is not finite"
                )));
            }
        }
        for i in 0..self.num_rows() {
            let (cols, vals) = self.row(i);
            if cols.is_empty() {
                return Err(LpError::InvalidProblem(format!("row {i} is empty")));
            }
            if !self.rhs[i].is_finite() {
                return Err(LpError::InvalidProblem(format!("rhs of row {i} is not finite")));
            }
            for (&j, &a) in cols.iter().zip(vals) {
                if j >= n {
                    return Err(LpError::InvalidProblem(format!(
                        "row {i} references variable {j} but only {n} exist"
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::InvalidProblem(format!(
                        "row {i} has a non-finite coefficient for variable {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Column-major copy of the row matrix: `(starts, rows, values)`.
    pub(crate) fn to_columns(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let n = self.num_vars();
        let mut counts = vec![0usize; n + 1];
        for &j in &self.row_cols {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let starts = counts.clone();
        let mut next = counts;
        let mut rows = vec![0usize; self.row_cols.len()];
        let mut vals = vec![0.0; self.row_cols.len()];
        for i in 0..self.num_rows() {
            let (cols, vs) = self.row(i);
            for (&j, &a) in cols.iter().zip(vs) {
                let k = next[j];
                rows[k] = i;
                vals[k] = a;
                next[j] += 1;
            }
        }
        (starts, rows, vals)
    }
}

/// Largest violation of any row or bound by the point `x`; zero when `x` is
/// feasible.
pub fn check_feasible(problem: &LpProblem, x: &[f64]) -> f64 {
    assert_eq!(x.len(), problem.num_vars(), "point has the wrong dimension");
    let mut worst = 0.0f64;
    for (j, &v) in x.iter().enumerate() {
        worst = worst.max(problem.lower[j] - v).max(v - problem.upper[j]);
    }
    for i in 0..problem.num_rows() {
        worst = worst.max(problem.row_activity(i, x) - problem.rhs[i]);
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}
