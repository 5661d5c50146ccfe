//! Interval-indexed LP relaxation of the weighted-completion-time problem.
//!
//! Time is cut into geometric intervals (see [`IntervalGrid`]) and `y_{ijℓ}`
//! measures how much of interval `I_ℓ` worker `j` spends on task `i`. The
//! optimum is a lower bound on every schedule whose tasks have `τ_i ≥ 1`
//! (the `I_0` start proxy of 1/2 can overshoot the mean busy time of shorter
//! tasks).

mod grid;
mod model;
pub mod simplex;

pub use grid::{build_grid, IntervalGrid};
pub use model::{build_lp, LpModel};
pub use simplex::{RowKind, SimplexOptions, SparseLp};

use serde::Serialize;

use crate::error::{Result, SchedError};
use crate::model::Instance;

/// Optimal fractional solution.
#[derive(Debug, Clone, Serialize)]
pub struct LpSolution {
    #[serde(skip)]
    grid: IntervalGrid,
    n: usize,
    m: usize,
    #[serde(skip)]
    y: Vec<f64>,
    /// Per-task LP completion time `C̄_i = max(D_i, Σ y|I|)`.
    pub cbar: Vec<f64>,
    /// Per-task `D_i(y)`.
    pub d: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub min_reduced_cost: f64,
    pub max_residual: f64,
}

impl LpSolution {
    pub fn grid(&self) -> &IntervalGrid {
        &self.grid
    }

    pub fn num_tasks(&self) -> usize {
        self.n
    }

    pub fn num_workers(&self) -> usize {
        self.m
    }

    pub fn num_intervals(&self) -> usize {
        self.grid.len()
    }

    pub fn y(&self, i: usize, j: usize, l: usize) -> f64 {
        self.y[(i * self.m + j) * self.grid.len() + l]
    }

    /// Nonzero `(i, j, ℓ, y)` entries, ids 0-based.
    pub fn nonzeros(&self, threshold: f64) -> Vec<(usize, usize, usize, f64)> {
        let k = self.grid.len();
        self.y
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > threshold)
            .map(|(c, &v)| (c / k / self.m, c / k % self.m, c % k, v))
            .collect()
    }
}

pub fn solve_lp(model: &LpModel) -> Result<LpSolution> {
    solve_lp_with(model, SimplexOptions::default())
}

pub fn solve_lp_with(model: &LpModel, opts: SimplexOptions) -> Result<LpSolution> {
    let (n, m, k) = (model.n, model.m, model.k);
    if n == 0 {
        return Ok(LpSolution {
            grid: model.grid.clone(),
            n,
            m,
            y: Vec::new(),
            cbar: Vec::new(),
            d: Vec::new(),
            objective: 0.0,
            iterations: 0,
            min_reduced_cost: 0.0,
            max_residual: 0.0,
        });
    }
    let res = simplex::solve(&model.lp, opts)?;
    let y = res.x[..model.num_y()].to_vec();
    let grid = &model.grid;

    let mut max_residual = 0.0f64;
    let mut d = vec![0.0; n];
    let mut cbar = vec![0.0; n];
    for i in 0..n {
        let mut mass = 0.0;
        let mut busy = 0.0;
        for j in 0..m {
            for l in 0..k {
                let v = y[model.y_index(i, j, l)];
                mass += v * grid.length(l) / model.rst[i];
                busy += v * grid.length(l);
                d[i] += v * model.d_coef(i, j, l);
            }
        }
        max_residual = max_residual.max((mass - 1.0).abs());
        cbar[i] = d[i].max(busy);
    }
    for j in 0..m {
        for l in 0..k {
            let load: f64 = (0..n).map(|i| y[model.y_index(i, j, l)]).sum();
            max_residual = max_residual.max(load - 1.0);
        }
    }
    if max_residual > 1e-7 {
        return Err(SchedError::Solver(format!(
            "constraint residual {max_residual:.3e} exceeds 1e-7"
        )));
    }
    if res.min_reduced_cost < -1e-7 {
        return Err(SchedError::Solver(format!(
            "terminated with negative reduced cost {:.3e}",
            res.min_reduced_cost
        )));
    }
    Ok(LpSolution {
        grid: grid.clone(),
        n,
        m,
        y,
        cbar,
        d,
        objective: res.objective,
        iterations: res.iterations,
        min_reduced_cost: res.min_reduced_cost,
        max_residual,
    })
}

/// Grid, model and solution for an instance in one call.
pub fn relax(instance: &Instance, eta: f64) -> Result<LpSolution> {
    let total = instance.total_rst();
    let grid = build_grid(if total > 0.0 { total } else { 1.0 }, eta)?;
    solve_lp(&build_lp(instance, &grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::four_task;

    #[test]
    fn model_counts() {
        let inst = Instance::from_contacts(&[(1.0, 1.0)], &[1.0]).unwrap();
        let grid = build_grid(1.0, 0.5).unwrap();
        let model = build_lp(&inst, &grid);
        assert_eq!(model.num_y(), 1);
        assert_eq!(model.num_cols(), 2);
        assert_eq!(model.num_equalities(), 1);
        assert_eq!(model.num_capacities(), 1);
        assert_eq!(model.num_z_bounds(), 2);
        assert_eq!(model.num_rows(), 4);

        let inst = Instance::from_contacts(&[(1.0, 1.0), (1.5, 1.0)], &[1.0, 1.0]).unwrap();
        let grid = build_grid(2.5, 1.5).unwrap();
        assert_eq!(grid.last(), 1);
        let model = build_lp(&inst, &grid);
        assert_eq!(model.num_y(), 8);
        assert_eq!(model.num_equalities(), 2);
        assert_eq!(model.num_capacities(), 4);

        let inst = Instance::from_contacts(&[], &[1.0]).unwrap();
        let model = build_lp(&inst, &build_grid(1.0, 0.5).unwrap());
        assert_eq!(model.num_cols(), 0);
        assert_eq!(solve_lp(&model).unwrap().objective, 0.0);
    }

    #[test]
    fn single_task_single_worker() {
        for &eta in &[0.3, 0.5, 1.0, 2.0] {
            let inst = Instance::from_contacts(&[(1.0, 1.0)], &[1.0]).unwrap();
            let sol = relax(&inst, eta).unwrap();
            assert!((sol.y(0, 0, 0) - 1.0).abs() < 1e-9);
            assert!((sol.d[0] - 2.0).abs() < 1e-9);
            assert!((sol.objective - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn objective_scales_with_weights() {
        let tasks = [(3.0, 2.0), (1.0, 5.0), (4.0, 1.0), (2.0, 2.0)];
        let scaled: Vec<(f64, f64)> = tasks.iter().map(|&(t, w)| (t, 3.5 * w)).collect();
        let a = relax(&Instance::from_rates(&tasks, &[1.0, 0.5]).unwrap(), 0.5).unwrap();
        let b = relax(&Instance::from_rates(&scaled, &[1.0, 0.5]).unwrap(), 0.5).unwrap();
        assert!((b.objective - 3.5 * a.objective).abs() < 1e-7 * b.objective);
    }

    #[test]
    fn four_task_regression() {
        let sol = relax(&four_task(10.0), 0.5).unwrap();
        assert!(sol.objective <= 155.0);
        // Frozen from this solver; the bound is far from tight on this instance.
        assert!((sol.objective - COUNTEREXAMPLE_LP).abs() < 1e-6, "{}", sol.objective);
        assert!(sol.min_reduced_cost >= -1e-7);
        assert!(sol.max_residual <= 1e-7);
    }

    const COUNTEREXAMPLE_LP: f64 = 144.9716796875;

    #[test]
    fn cbar_is_max_of_bounds() {
        let inst = Instance::from_rates(&[(5.0, 1.0), (1.0, 4.0), (2.0, 2.0)], &[2.0, 0.5]).unwrap();
        let sol = relax(&inst, 1.0).unwrap();
        let obj: f64 = inst.tasks().iter().zip(&sol.cbar).map(|(t, c)| t.weight * c).sum();
        assert!((obj - sol.objective).abs() < 1e-6);
        for (i, t) in inst.tasks().iter().enumerate() {
            assert!(sol.cbar[i] + 1e-9 >= sol.d[i]);
            assert!(sol.cbar[i] + 1e-9 >= t.rst);
        }
    }
}
