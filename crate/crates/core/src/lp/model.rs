use std::io::{self, Write};

use super::grid::IntervalGrid;
use super::simplex::{RowKind, SparseLp};
use crate::model::Instance;

/// The interval-indexed relaxation in solver form.
///
/// Columns: `y_{ijℓ}` at `(i·m + j)·(L+1) + ℓ`, then one auxiliary `Z_i` per task
/// standing in for `C_i`. Rows, in order:
///  - `n` equalities `Σ_{j,ℓ} y_{ijℓ}|I_ℓ|/τ_i = 1`
///  - `m·(L+1)` capacities `Σ_i y_{ijℓ} ≤ 1`
///  - `n` rows `D_i(y) − Z_i ≤ 0`
///  - `n` rows `Σ_{j,ℓ} y_{ijℓ}|I_ℓ| − Z_i ≤ 0`
///
/// with objective `Σ w_i Z_i`. Both bounds are lower bounds on `C_i` and the
/// objective pushes `Z_i` down onto the larger of them.
#[derive(Debug, Clone)]
pub struct LpModel {
    pub(crate) n: usize,
    pub(crate) m: usize,
    pub(crate) k: usize,
    pub(crate) grid: IntervalGrid,
    pub(crate) rst: Vec<f64>,
    pub(crate) weight: Vec<f64>,
    pub(crate) contact: Vec<f64>,
    pub(crate) lp: SparseLp,
}

impl LpModel {
    pub fn grid(&self) -> &IntervalGrid {
        &self.grid
    }

    pub fn num_tasks(&self) -> usize {
        self.n
    }

    pub fn num_workers(&self) -> usize {
        self.m
    }

    pub fn y_index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.m + j) * self.k + l
    }

    pub fn z_index(&self, i: usize) -> usize {
        self.num_y() + i
    }

    pub fn num_y(&self) -> usize {
        self.n * self.m * self.k
    }

    pub fn num_cols(&self) -> usize {
        self.lp.cols.len()
    }

    pub fn num_rows(&self) -> usize {
        self.lp.num_rows
    }

    pub fn num_equalities(&self) -> usize {
        self.lp.kinds.iter().filter(|k| **k == RowKind::Eq).count()
    }

    pub fn num_capacities(&self) -> usize {
        self.m * self.k * usize::from(self.n > 0)
    }

    pub fn num_z_bounds(&self) -> usize {
        2 * self.n
    }

    /// Coefficient of `y_{ijℓ}` in `D_i`: `|I_ℓ|/τ_i·(e_j + anchor_ℓ) + |I_ℓ|/2`.
    pub(crate) fn d_coef(&self, i: usize, j: usize, l: usize) -> f64 {
        let len = self.grid.length(l);
        len / self.rst[i] * (self.contact[j] + self.grid.anchor(l)) + 0.5 * len
    }

    /// Plain-text row/column listing for cross-checking with an external solver.
    pub fn dump(&self, out: &mut impl Write) -> io::Result<()> {
        let name = |c: usize| {
            if c < self.num_y() {
                let l = c % self.k;
                let ij = c / self.k;
                format!("y_{}_{}_{}", ij / self.m + 1, ij % self.m + 1, l)
            } else {
                format!("Z_{}", c - self.num_y() + 1)
            }
        };
        writeln!(out, "# rows {} cols {}", self.num_rows(), self.num_cols())?;
        writeln!(out, "minimize")?;
        let obj: Vec<String> = self
            .lp
            .cost
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(c, v)| format!("{v:+} {}", name(c)))
            .collect();
        writeln!(out, "  {}", obj.join(" "))?;
        writeln!(out, "subject to")?;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_rows()];
        for (c, col) in self.lp.cols.iter().enumerate() {
            for &(r, v) in col {
                rows[r].push((c, v));
            }
        }
        for (r, terms) in rows.iter().enumerate() {
            let lhs: Vec<String> = terms.iter().map(|&(c, v)| format!("{v:+} {}", name(c))).collect();
            let op = match self.lp.kinds[r] {
                RowKind::Le => "<=",
                RowKind::Ge => ">=",
                RowKind::Eq => "=",
            };
            writeln!(out, "  r{}: {} {} {}", r + 1, lhs.join(" "), op, self.lp.rhs[r])?;
        }
        writeln!(out, "bounds")?;
        writeln!(out, "  all variables >= 0")?;
        Ok(())
    }
}

pub fn build_lp(instance: &Instance, grid: &IntervalGrid) -> LpModel {
    let n = instance.n();
    let m = instance.m();
    let k = grid.len();
    let mut model = LpModel {
        n,
        m,
        k,
        grid: grid.clone(),
        rst: instance.tasks().iter().map(|t| t.rst).collect(),
        weight: instance.tasks().iter().map(|t| t.weight).collect(),
        contact: instance.contacts(),
        lp: SparseLp::default(),
    };
    if n == 0 {
        return model;
    }
    let cap_row = |j: usize, l: usize| n + j * k + l;
    let d_row = |i: usize| n + m * k + i;
    let e_row = |i: usize| 2 * n + m * k + i;
    let num_rows = 3 * n + m * k;

    let mut cols = Vec::with_capacity(n * m * k + n);
    let mut cost = Vec::with_capacity(n * m * k + n);
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                let len = grid.length(l);
                cols.push(vec![
                    (i, len / model.rst[i]),
                    (cap_row(j, l), 1.0),
                    (d_row(i), model.d_coef(i, j, l)),
                    (e_row(i), len),
                ]);
                cost.push(0.0);
            }
        }
    }
    for i in 0..n {
        cols.push(vec![(d_row(i), -1.0), (e_row(i), -1.0)]);
        cost.push(model.weight[i]);
    }
    let mut kinds = vec![RowKind::Le; num_rows];
    let mut rhs = vec![0.0; num_rows];
    for i in 0..n {
        kinds[i] = RowKind::Eq;
        rhs[i] = 1.0;
    }
    for r in n..n + m * k {
        rhs[r] = 1.0;
    }
    model.lp = SparseLp {
        num_rows,
        cols,
        cost,
        kinds,
        rhs,
    };
    model
}
