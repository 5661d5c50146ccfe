//! Two-phase primal simplex over sparse columns, keeping an explicit dense
//! basis inverse (revised form).
//!
//! Pricing is Dantzig's most-negative reduced cost. After a run of
//! degenerate pivots the solver falls back to Bland's smallest-index rule
//! until the objective moves again, which rules out cycling.

use crate::error::{Result, SchedError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

/// `min c·x` s.t. each row `a_r·x (kind) b_r`, `x ≥ 0`.
#[derive(Debug, Clone, Default)]
pub struct SparseLp {
    pub num_rows: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub kinds: Vec<RowKind>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    pub refactor_every: usize,
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            feas_tol: 1e-7,
            opt_tol: 1e-9,
            max_iter: 200_000,
            refactor_every: 100,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Smallest phase-2 reduced cost at termination (scaled problem).
    pub min_reduced_cost: f64,
}

struct Tableau {
    rows: usize,
    cols: Vec<Vec<(usize, f64)>>,
    art_start: usize,
    rhs: Vec<f64>,
    /// Column-major `rows × rows`.
    binv: Vec<f64>,
    basis: Vec<usize>,
    basic: Vec<bool>,
    xb: Vec<f64>,
    iterations: usize,
    opts: SimplexOptions,
}

pub fn solve(lp: &SparseLp, opts: SimplexOptions) -> Result<SimplexResult> {
    let rows = lp.num_rows;
    let num_struct = lp.cols.len();
    if lp.kinds.len() != rows || lp.rhs.len() != rows || lp.cost.len() != num_struct {
        return Err(SchedError::Solver("inconsistent LP dimensions".into()));
    }

    // Row then column equilibration; rows with negative rhs are negated.
    let mut row_scale = vec![0.0f64; rows];
    for col in &lp.cols {
        for &(r, v) in col {
            row_scale[r] = row_scale[r].max(v.abs());
        }
    }
    for (s, b) in row_scale.iter_mut().zip(&lp.rhs) {
        let mag = if *s > 0.0 { 1.0 / *s } else { 1.0 };
        *s = if *b < 0.0 { -mag } else { mag };
    }
    let kinds: Vec<RowKind> = lp
        .kinds
        .iter()
        .zip(&lp.rhs)
        .map(|(&k, &b)| match k {
            RowKind::Le if b < 0.0 => RowKind::Ge,
            RowKind::Ge if b < 0.0 => RowKind::Le,
            k => k,
        })
        .collect();
    let mut col_scale = vec![1.0f64; num_struct];
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(num_struct + 2 * rows);
    for (c, col) in lp.cols.iter().enumerate() {
        let scaled: Vec<(usize, f64)> = col.iter().map(|&(r, v)| (r, v * row_scale[r])).collect();
        let big = scaled.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
        if big > 0.0 {
            col_scale[c] = 1.0 / big;
        }
        cols.push(scaled.into_iter().map(|(r, v)| (r, v * col_scale[c])).collect());
    }
    let rhs: Vec<f64> = lp.rhs.iter().zip(&row_scale).map(|(b, s)| b * s).collect();

    let mut basis = vec![usize::MAX; rows];
    for (r, kind) in kinds.iter().enumerate() {
        match kind {
            RowKind::Le => {
                basis[r] = cols.len();
                cols.push(vec![(r, 1.0)]);
            }
            RowKind::Ge => cols.push(vec![(r, -1.0)]),
            RowKind::Eq => {}
        }
    }
    let art_start = cols.len();
    for (r, kind) in kinds.iter().enumerate() {
        if *kind != RowKind::Le {
            basis[r] = cols.len();
            cols.push(vec![(r, 1.0)]);
        }
    }
    let total = cols.len();
    let mut basic = vec![false; total];
    for &b in &basis {
        basic[b] = true;
    }
    let mut binv = vec![0.0; rows * rows];
    for r in 0..rows {
        binv[r * rows + r] = 1.0;
    }

    let mut t = Tableau {
        rows,
        cols,
        art_start,
        xb: rhs.clone(),
        rhs,
        binv,
        basis,
        basic,
        iterations: 0,
        opts,
    };

    if art_start < total {
        let phase1: Vec<f64> = (0..total).map(|j| if j >= art_start { 1.0 } else { 0.0 }).collect();
        t.run(&phase1, total)?;
        let infeas: f64 = (0..rows)
            .filter(|&k| t.basis[k] >= art_start)
            .map(|k| t.xb[k].max(0.0))
            .sum();
        if infeas > opts.feas_tol {
            return Err(SchedError::Solver(format!("LP infeasible (phase-1 residual {infeas:.3e})")));
        }
        t.drive_out_artificials();
    }

    let mut phase2 = vec![0.0; total];
    for j in 0..num_struct {
        phase2[j] = lp.cost[j] * col_scale[j];
    }
    let min_reduced_cost = t.run(&phase2, art_start)?;

    let mut x = vec![0.0; num_struct];
    for (k, &b) in t.basis.iter().enumerate() {
        if b < num_struct {
            x[b] = t.xb[k].max(0.0) * col_scale[b];
        }
    }
    let objective = x.iter().zip(&lp.cost).map(|(x, c)| x * c).sum();
    Ok(SimplexResult {
        x,
        objective,
        iterations: t.iterations,
        min_reduced_cost,
    })
}

impl Tableau {
    fn binv_col(&self, r: usize) -> &[f64] {
        &self.binv[r * self.rows..(r + 1) * self.rows]
    }

    fn ftran(&self, col: &[(usize, f64)]) -> Vec<f64> {
        let mut alpha = vec![0.0; self.rows];
        for &(r, v) in col {
            for (a, b) in alpha.iter_mut().zip(self.binv_col(r)) {
                *a += v * b;
            }
        }
        alpha
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&b| cost[b]).collect();
        (0..self.rows)
            .map(|r| self.binv_col(r).iter().zip(&cb).map(|(a, c)| a * c).sum())
            .collect()
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], pi: &[f64]) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(r, v)| pi[r] * v).sum::<f64>()
    }

    /// Minimizes `cost` over columns `< allowed`. Returns the smallest reduced
    /// cost at optimality.
    fn run(&mut self, cost: &[f64], allowed: usize) -> Result<f64> {
        let mut degenerate_run = 0usize;
        loop {
            let pi = self.duals(cost);
            let bland = degenerate_run >= self.opts.bland_after;
            let mut entering = None;
            let mut best = -self.opts.opt_tol;
            let mut min_rc = f64::INFINITY;
            for j in 0..allowed {
                if self.basic[j] {
                    continue;
                }
                let d = self.reduced_cost(j, cost, &pi);
                min_rc = min_rc.min(d);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(if min_rc.is_finite() { min_rc } else { 0.0 });
            };

            let alpha = self.ftran(&self.cols[q]);
            let mut theta = f64::INFINITY;
            for k in 0..self.rows {
                if alpha[k] > self.opts.pivot_tol {
                    theta = theta.min(self.xb[k].max(0.0) / alpha[k]);
                }
            }
            if !theta.is_finite() {
                return Err(SchedError::Solver("LP unbounded".into()));
            }
            let mut leave: Option<usize> = None;
            for k in 0..self.rows {
                if alpha[k] > self.opts.pivot_tol && self.xb[k].max(0.0) / alpha[k] <= theta + 1e-12 {
                    leave = match leave {
                        None => Some(k),
                        Some(p) if bland && self.basis[k] < self.basis[p] => Some(k),
                        Some(p) if !bland && alpha[k] > alpha[p] => Some(k),
                        keep => keep,
                    };
                }
            }
            let p = leave.expect("ratio test found a row");
            self.pivot(q, p, &alpha, theta);

            degenerate_run = if theta <= 1e-12 { degenerate_run + 1 } else { 0 };
            self.iterations += 1;
            if self.iterations % self.opts.refactor_every == 0 {
                self.refactor()?;
            }
            if self.iterations > self.opts.max_iter {
                return Err(SchedError::Solver(format!(
                    "iteration cap {} exceeded",
                    self.opts.max_iter
                )));
            }
        }
    }

    fn pivot(&mut self, q: usize, p: usize, alpha: &[f64], theta: f64) {
        let rows = self.rows;
        for k in 0..rows {
            self.xb[k] -= theta * alpha[k];
        }
        self.xb[p] = theta;
        let ap = alpha[p];
        for r in 0..rows {
            let col = &mut self.binv[r * rows..(r + 1) * rows];
            let v = col[p];
            if v == 0.0 {
                continue;
            }
            let v = v / ap;
            for (c, a) in col.iter_mut().zip(alpha) {
                *c -= a * v;
            }
            col[p] = v;
        }
        self.basic[self.basis[p]] = false;
        self.basic[q] = true;
        self.basis[p] = q;
    }

    /// Recomputes the basis inverse from scratch and refreshes basic values.
    fn refactor(&mut self) -> Result<()> {
        let n = self.rows;
        // Row-major augmented [B | I].
        let w = 2 * n;
        let mut a = vec![0.0; n * w];
        for (k, &b) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[b] {
                a[r * w + k] = v;
            }
        }
        for r in 0..n {
            a[r * w + n + r] = 1.0;
        }
        for c in 0..n {
            let (piv, big) = (c..n)
                .map(|r| (r, a[r * w + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if big < 1e-12 {
                return Err(SchedError::Solver("singular basis during refactorization".into()));
            }
            if piv != c {
                for j in 0..w {
                    a.swap(c * w + j, piv * w + j);
                }
            }
            let d = a[c * w + c];
            for j in 0..w {
                a[c * w + j] /= d;
            }
            let (head, tail) = a.split_at_mut(c * w);
            let (prow, rest) = tail.split_at_mut(w);
            for row in head.chunks_exact_mut(w).chain(rest.chunks_exact_mut(w)) {
                let f = row[c];
                if f == 0.0 {
                    continue;
                }
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
            }
        }
        // Inverse is the right half; row k of B^{-1} corresponds to basis slot k.
        for k in 0..n {
            for r in 0..n {
                self.binv[r * n + k] = a[k * w + n + r];
            }
        }
        for k in 0..n {
            self.xb[k] = (0..n).map(|r| self.binv[r * n + k] * self.rhs[r]).sum();
        }
        Ok(())
    }

    fn drive_out_artificials(&mut self) {
        let rows = self.rows;
        for p in 0..rows {
            if self.basis[p] < self.art_start {
                continue;
            }
            // Row p of B^{-1}.
            let rho: Vec<f64> = (0..rows).map(|r| self.binv[r * rows + p]).collect();
            let candidate = (0..self.art_start).filter(|&j| !self.basic[j]).find(|&j| {
                let v: f64 = self.cols[j].iter().map(|&(r, v)| rho[r] * v).sum();
                v.abs() > 1e-7
            });
            if let Some(q) = candidate {
                let alpha = self.ftran(&self.cols[q]);
                let theta = self.xb[p].max(0.0) / alpha[p];
                self.pivot(q, p, &alpha, theta);
            }
        }
    }
}
