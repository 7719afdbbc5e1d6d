//! Sparse LU factorization of simplex bases.
//!
//! The factorization is computed by right-looking Gaussian elimination with
//! Markowitz pivot selection and threshold partial pivoting. Basis changes
//! between refactorizations are kept as a product-form eta file.
//!
//! Index spaces: the basis matrix `B` has constraint rows `i` and basis
//! positions `k`. `ftran` maps a row-indexed right-hand side to a
//! position-indexed solution of `B y = b`; `btran` maps a position-indexed
//! right-hand side to a row-indexed solution of `B' z = c`.

/// Relative threshold for accepting a pivot against the column maximum.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Entries below this magnitude are never pivots.
const ABS_PIVOT_TOL: f64 = 1e-11;
/// Number of columns examined once a candidate is known.
const SEARCH_LIMIT: usize = 4;

/// Positions and rows left unpivoted when a basis turns out singular.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BasisFactor {
    m: usize,
    piv_row: Vec<usize>,
    piv_pos: Vec<usize>,
    piv_val: Vec<f64>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    etas: Vec<Eta>,
    eta_nnz: usize,
}

impl BasisFactor {
    /// Factorizes the `m x m` matrix whose column at position `k` is
    /// `columns[k]` (pairs of row index and value).
    pub fn factorize(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        assert_eq!(columns.len(), m);
        Markowitz::new(m, columns).run()
    }

    /// Nonzeros of the fresh factorization, counting the diagonal.
    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.m
    }

    /// Nonzeros accumulated in the eta file.
    pub fn eta_nnz(&self) -> usize {
        self.eta_nnz
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Records the replacement of the column at `pos` by a column whose
    /// representation in the current basis is `alpha` (a dense
    /// position-indexed vector).
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let mut eta = Eta {
            pos,
            pivot: alpha[pos],
            ..Eta::default()
        };
        for (k, &a) in alpha.iter().enumerate() {
            if k != pos && a != 0.0 {
                eta.idx.push(k);
                eta.val.push(a);
            }
        }
        self.eta_nnz += eta.idx.len() + 1;
        self.etas.push(eta);
    }

    /// Solves `B y = b` in place: `x` enters row-indexed and leaves
    /// position-indexed. `work` must have length `m`.
    pub fn ftran(&self, x: &mut [f64], work: &mut [f64]) {
        let m = self.m;
        // L: row operations in pivot order.
        for k in 0..m {
            let p = x[self.piv_row[k]];
            if p != 0.0 {
                for t in self.l_start[k]..self.l_start[k + 1] {
                    x[self.l_idx[t]] -= self.l_val[t] * p;
                }
            }
        }
        // U: back substitution into position space.
        for k in (0..m).rev() {
            let mut v = x[self.piv_row[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                v -= self.u_val[t] * work[self.u_idx[t]];
            }
            work[self.piv_pos[k]] = v / self.piv_val[k];
        }
        x.copy_from_slice(work);
        for eta in &self.etas {
            let yr = x[eta.pos] / eta.pivot;
            x[eta.pos] = yr;
            if yr != 0.0 {
                for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                    x[i] -= a * yr;
                }
            }
        }
    }

    /// Solves `B' z = c` in place: `x` enters position-indexed and leaves
    /// row-indexed. `work` must have length `m`.
    pub fn btran(&self, x: &mut [f64], work: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut v = x[eta.pos];
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                v -= a * x[i];
            }
            x[eta.pos] = v / eta.pivot;
        }
        // U': forward in pivot order, scattering into position space.
        for k in 0..m {
            let w = x[self.piv_pos[k]] / self.piv_val[k];
            work[self.piv_row[k]] = w;
            if w != 0.0 {
                for t in self.u_start[k]..self.u_start[k + 1] {
                    x[self.u_idx[t]] -= self.u_val[t] * w;
                }
            }
        }
        // L': reverse pivot order.
        for k in (0..m).rev() {
            let mut v = work[self.piv_row[k]];
            for t in self.l_start[k]..self.l_start[k + 1] {
                v -= self.l_val[t] * work[self.l_idx[t]];
            }
            work[self.piv_row[k]] = v;
        }
        x.copy_from_slice(work);
    }
}

/// Active-submatrix state for one factorization.
struct Markowitz {
    m: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<usize>>,
    row_alive: Vec<bool>,
    col_alive: Vec<bool>,
    col_count: Vec<usize>,
    row_bucket: Vec<Vec<usize>>,
    col_bucket: Vec<Vec<usize>>,
    marker: Vec<usize>,
    out: BasisFactor,
}

impl Markowitz {
    fn new(m: usize, columns: &[Vec<(usize, f64)>]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (k, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                if v != 0.0 {
                    rows[i].push((k, v));
                    cols[k].push(i);
                }
            }
        }
        let col_count: Vec<usize> = cols.iter().map(Vec::len).collect();
        let mut row_bucket = vec![Vec::new(); m + 2];
        let mut col_bucket = vec![Vec::new(); m + 2];
        for i in 0..m {
            row_bucket[rows[i].len().min(m + 1)].push(i);
            col_bucket[col_count[i].min(m + 1)].push(i);
        }
        let out = BasisFactor {
            m,
            l_start: vec![0],
            u_start: vec![0],
            ..BasisFactor::default()
        };
        Self {
            m,
            rows,
            cols,
            row_alive: vec![true; m],
            col_alive: vec![true; m],
            col_count,
            row_bucket,
            col_bucket,
            marker: vec![usize::MAX; m],
            out,
        }
    }

    fn value(&self, i: usize, k: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|e| e.0 == k)
            .map(|e| e.1)
            .unwrap_or(0.0)
    }

    fn col_max(&self, k: usize) -> f64 {
        self.cols[k]
            .iter()
            .filter(|&&i| self.row_alive[i])
            .map(|&i| self.value(i, k).abs())
            .fold(0.0, f64::max)
    }

    /// Markowitz search; returns `(row, position, value)`. Buckets are
    /// cleaned lazily: stale entries are dropped when encountered.
    fn find_pivot(&mut self) -> Option<(usize, usize, f64)> {
        let m = self.m;
        let mut best: Option<(usize, usize, f64)> = None;
        let mut best_cost = usize::MAX;
        let mut examined = 0usize;
        for count in 1..=m + 1 {
            // Columns with `count` active entries.
            let mut idx = self.col_bucket[count].len();
            while idx > 0 && !(examined >= SEARCH_LIMIT && best.is_some()) {
                idx -= 1;
                let k = self.col_bucket[count][idx];
                if !self.col_alive[k] || self.col_count[k].min(m + 1) != count {
                    self.col_bucket[count].swap_remove(idx);
                    continue;
                }
                let cmax = self.col_max(k);
                if cmax < ABS_PIVOT_TOL {
                    continue;
                }
                examined += 1;
                for &i in &self.cols[k] {
                    if !self.row_alive[i] {
                        continue;
                    }
                    let v = self.value(i, k);
                    if v.abs() < PIVOT_THRESHOLD * cmax || v.abs() < ABS_PIVOT_TOL {
                        continue;
                    }
                    let cost = (self.rows[i].len() - 1) * (count - 1);
                    let better = cost < best_cost
                        || (cost == best_cost && best.is_some_and(|b| v.abs() > b.2.abs()));
                    if better {
                        best_cost = cost;
                        best = Some((i, k, v));
                    }
                }
            }
            // Anything left has a column count of at least `count`.
            if best.is_some() && (best_cost <= (count - 1) * (count - 1) || examined >= SEARCH_LIMIT) {
                return best;
            }
            // Rows with `count` active entries.
            let mut idx = self.row_bucket[count].len();
            while idx > 0 && !(examined >= SEARCH_LIMIT && best.is_some()) {
                idx -= 1;
                let i = self.row_bucket[count][idx];
                if !self.row_alive[i] || self.rows[i].len().min(m + 1) != count {
                    self.row_bucket[count].swap_remove(idx);
                    continue;
                }
                examined += 1;
                for &(k, v) in &self.rows[i] {
                    if v.abs() < ABS_PIVOT_TOL {
                        continue;
                    }
                    let cost = (count - 1) * (self.col_count[k] - 1);
                    if cost >= best_cost {
                        continue;
                    }
                    if v.abs() < PIVOT_THRESHOLD * self.col_max(k) {
                        continue;
                    }
                    best_cost = cost;
                    best = Some((i, k, v));
                }
            }
            // Anything left has row and column counts above `count`.
            if best.is_some() && (best_cost <= count * count || examined >= SEARCH_LIMIT) {
                return best;
            }
        }
        best
    }

    fn eliminate(&mut self, p: usize, q: usize, pivot: f64) {
        let m = self.m;
        let prow = std::mem::take(&mut self.rows[p]);
        self.row_alive[p] = false;
        self.col_alive[q] = false;
        for &(k, _) in &prow {
            self.col_count[k] -= 1;
            if k != q && self.col_alive[k] {
                self.col_bucket[self.col_count[k].min(m + 1)].push(k);
            }
        }
        // Record the U row.
        self.out.piv_row.push(p);
        self.out.piv_pos.push(q);
        self.out.piv_val.push(pivot);
        for &(k, v) in &prow {
            if k != q {
                self.out.u_idx.push(k);
                self.out.u_val.push(v);
            }
        }
        self.out.u_start.push(self.out.u_idx.len());

        let targets = std::mem::take(&mut self.cols[q]);
        for &i in &targets {
            if !self.row_alive[i] {
                continue;
            }
            let row = &mut self.rows[i];
            let Some(at) = row.iter().position(|e| e.0 == q) else {
                continue;
            };
            let l = row.swap_remove(at).1 / pivot;
            self.out.l_idx.push(i);
            self.out.l_val.push(l);
            for (t, &(k, _)) in row.iter().enumerate() {
                self.marker[k] = t;
            }
            for &(k, v) in &prow {
                if k == q {
                    continue;
                }
                let t = self.marker[k];
                if t != usize::MAX && t < row.len() && row[t].0 == k {
                    row[t].1 -= l * v;
                } else {
                    row.push((k, -l * v));
                    self.cols[k].push(i);
                    self.col_count[k] += 1;
                    self.col_bucket[self.col_count[k].min(m + 1)].push(k);
                }
            }
            for &(k, _) in row.iter() {
                self.marker[k] = usize::MAX;
            }
            self.row_bucket[row.len().min(m + 1)].push(i);
        }
        self.out.l_start.push(self.out.l_idx.len());
    }

    fn run(mut self) -> Result<BasisFactor, Singular> {
        for _ in 0..self.m {
            match self.find_pivot() {
                Some((p, q, v)) => self.eliminate(p, q, v),
                None => {
                    let positions = (0..self.m).filter(|&k| self.col_alive[k]).collect();
                    let rows = (0..self.m).filter(|&i| self.row_alive[i]).collect();
                    return Err(Singular { positions, rows });
                }
            }
        }
        Ok(self.out)
    }
}
