//! Sparse linear programming with box bounds.
//!
//! Problems are stated as `min c'x  s.t.  A x <= b,  lo <= x <= hi` and
//! solved by a bounded-variable dual simplex on a sparse LU factorization.
//! [`mps`] reads and writes the fixed-column text interchange format.

mod dual;
mod lu;
pub mod mps;
mod problem;
pub mod selftest;

pub use problem::{check_feasible, LpProblem};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("MPS line {line}: {message}")]
    Mps { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpConfig {
    /// Allowed bound violation of basic variables at optimality.
    pub primal_tolerance: f64,
    /// Allowed wrong-sign reduced cost at optimality.
    pub dual_tolerance: f64,
    pub max_iterations: usize,
    /// Basis updates between fresh LU factorizations.
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule;
    /// `None` uses `max(50, rows)`.
    pub degenerate_limit: Option<usize>,
    /// Box imposed on variables without a finite bound. Solutions resting on
    /// it are retried with a wider box and then reported unbounded.
    pub artificial_bound: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            primal_tolerance: 1e-9,
            dual_tolerance: 1e-9,
            max_iterations: 1_000_000,
            refactor_interval: 100,
            degenerate_limit: None,
            artificial_bound: 1e6,
        }
    }
}

/// Simplex basis: basic variable per row position plus the bound side of
/// every nonbasic variable. Indices `n..n+m` are the row slacks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub at_upper: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values. Meaningful only when `status` is `Optimal`.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals `y <= 0` with `c - A'y >= 0` on variables at their lower
    /// bound. Zero unless optimal.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Final basis, usable as a hint for a related problem with the same
    /// shape.
    pub basis: Option<Basis>,
}

/// Solves `problem`, optionally starting from `hint`. A hint that does not
/// match the problem's shape is ignored.
pub fn solve_lp(
    problem: &LpProblem,
    config: &LpConfig,
    hint: Option<&Basis>,
) -> Result<LpSolution, LpError> {
    problem.validate()?;
    Ok(dual::DualSimplex::new(problem, config).solve(hint))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &LpProblem) -> LpSolution {
        solve_lp(p, &LpConfig::default(), None).unwrap()
    }

    #[test]
    fn bound_active_minimum() {
        let mut p = LpProblem::new(1);
        p.set_objective(0, 1.0);
        p.set_bounds(0, 1.0, 10.0);
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![1.0]);
        assert_eq!(s.objective, 1.0);
    }

    #[test]
    fn textbook_vertex() {
        let mut p = LpProblem::new(2);
        p.set_objective(0, -1.0);
        p.set_objective(1, -1.0);
        p.set_bounds(0, 0.0, 1.0);
        p.set_bounds(1, 0.0, 1.0);
        p.add_row(&[(0, 1.0), (1, 1.0)], 1.0);
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-12);
        assert!(check_feasible(&p, &s.x) <= 1e-12);
    }

    #[test]
    fn detects_infeasible() {
        let mut p = LpProblem::new(1);
        p.set_bounds(0, 0.0, 1.0);
        p.add_row(&[(0, -1.0)], -2.0);
        assert_eq!(solve(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut p = LpProblem::new(2);
        p.set_objective(0, -1.0);
        p.set_bounds(1, 0.0, 1.0);
        p.add_row(&[(0, -1.0), (1, 1.0)], 0.0);
        assert_eq!(solve(&p).status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_absolute_value() {
        // min t  s.t.  t >= |x - 3|,  x free
        let mut p = LpProblem::new(2);
        p.set_objective(1, 1.0);
        p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        p.set_bounds(1, f64::NEG_INFINITY, f64::INFINITY);
        p.add_row(&[(0, 1.0), (1, -1.0)], 3.0);
        p.add_row(&[(0, -1.0), (1, -1.0)], -3.0);
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective.abs() < 1e-9);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_problem() {
        let mut p = LpProblem::new(1);
        p.set_bounds(0, 1.0, 0.0);
        assert!(matches!(
            solve_lp(&p, &LpConfig::default(), None),
            Err(LpError::InvalidProblem(_))
        ));
    }
}
