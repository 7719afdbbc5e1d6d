//! Brute-force cross-check of the solver on small random problems.
//!
//! Each problem is boxed, so its feasible set is a polytope and the optimum
//! sits at a vertex. The oracle enumerates every choice of `n` active
//! constraints among rows and bounds, solves the resulting square system
//! and keeps the best feasible point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{check_feasible, solve_lp, LpConfig, LpProblem, LpStatus};

pub const MAX_VARS: usize = 6;
pub const MAX_ROWS: usize = 8;

/// Draws a random boxed problem with at most [`MAX_VARS`] variables and
/// [`MAX_ROWS`] rows. Roughly one in five is infeasible by construction
/// of its right-hand side; the rest contain a known interior point.
pub fn random_problem(rng: &mut impl Rng) -> LpProblem {
    let n = rng.random_range(1..=MAX_VARS);
    let m = rng.random_range(1..=MAX_ROWS);
    let integer = rng.random_bool(0.5);
    fn draw(rng: &mut impl Rng, integer: bool) -> f64 {
        if integer {
            rng.random_range(-3i32..=3) as f64
        } else {
            rng.random_range(-1.0..1.0)
        }
    }
    let mut p = LpProblem::new(n);
    let mut x0 = vec![0.0; n];
    for j in 0..n {
        p.set_objective(j, draw(rng, integer));
        let lo = -(rng.random_range(0..=2) as f64);
        let hi = lo + rng.random_range(1..=4) as f64;
        p.set_bounds(j, lo, hi);
        x0[j] = rng.random_range(lo..hi);
    }
    let feasible = rng.random_bool(0.8);
    for _ in 0..m {
        let mut row = Vec::new();
        while row.is_empty() {
            for j in 0..n {
                if rng.random_bool(0.7) {
                    let a = draw(rng, integer);
                    if a != 0.0 {
                        row.push((j, a));
                    }
                }
            }
        }
        let act: f64 = row.iter().map(|&(j, a)| a * x0[j]).sum();
        let b = if feasible {
            act + rng.random_range(0.0..1.0)
        } else {
            rng.random_range(-6.0..2.0)
        };
        p.add_row(&row, b);
    }
    p
}

/// Minimum objective over all vertices, or `None` when no vertex is
/// feasible. Only valid for problems whose bounds are all finite.
pub fn vertex_oracle(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars();
    // Hyperplanes a.x = b from rows and both bounds of each variable.
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..p.num_rows() {
        let mut a = vec![0.0; n];
        let (cols, vals) = p.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            a[j] = v;
        }
        planes.push((a, p.rhs()[i]));
    }
    for j in 0..n {
        for bound in [p.lower()[j], p.upper()[j]] {
            assert!(bound.is_finite(), "vertex oracle needs finite bounds");
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            planes.push((a, bound));
        }
    }
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(n);
    enumerate(&planes, n, 0, &mut chosen, &mut |idx| {
        if let Some(x) = solve_square(&planes, idx) {
            if check_feasible(p, &x) <= 1e-9 {
                let f = p.objective_value(&x);
                best = Some(best.map_or(f, |b: f64| b.min(f)));
            }
        }
    });
    best
}

fn enumerate(
    planes: &[(Vec<f64>, f64)],
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for i in start..planes.len() {
        chosen.push(i);
        enumerate(planes, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Gaussian elimination with partial pivoting; `None` if near singular.
fn solve_square(planes: &[(Vec<f64>, f64)], idx: &[usize]) -> Option<Vec<f64>> {
    let n = idx.len();
    let mut a: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| {
            let mut r = planes[i].0.clone();
            r.push(planes[i].1);
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Outcome of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub problems: usize,
    pub infeasible: usize,
    /// Problems where the solver and the oracle disagree on status.
    pub status_mismatches: usize,
    pub max_objective_error: f64,
    pub max_violation: f64,
}

impl SelftestReport {
    pub fn passed(&self, objective_tol: f64, feasibility_tol: f64) -> bool {
        self.status_mismatches == 0
            && self.max_objective_error <= objective_tol
            && self.max_violation <= feasibility_tol
    }
}

/// Solves `count` random problems drawn from `seed` and compares each
/// against the vertex oracle.
pub fn run(count: usize, seed: u64) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = LpConfig::default();
    let mut report = SelftestReport {
        problems: count,
        infeasible: 0,
        status_mismatches: 0,
        max_objective_error: 0.0,
        max_violation: 0.0,
    };
    for _ in 0..count {
        let p = random_problem(&mut rng);
        let expected = vertex_oracle(&p);
        let got = solve_lp(&p, &cfg, None).expect("generated problems are valid");
        match (expected, got.status) {
            (Some(f), LpStatus::Optimal) => {
                report.max_objective_error = report.max_objective_error.max((got.objective - f).abs());
                report.max_violation = report.max_violation.max(check_feasible(&p, &got.x));
            }
            (None, LpStatus::Infeasible) => report.infeasible += 1,
            _ => report.status_mismatches += 1,
        }
    }
    report
}
