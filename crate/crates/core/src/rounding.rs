//! Rounding the LP relaxation into schedules.
//!
//! Every task gets a worker-interval pair `(j, ℓ)` and a tentative start
//! `t_i`, the left endpoint of `I_ℓ`. Each worker then runs its tasks back to
//! back from `e_j` in non-decreasing `t_i`.
//!
//! With placements drawn independently, the completion time of `i` at `(j, ℓ)` is
//! `e_j + τ_i + Σ_{k≠i} τ_k·[k precedes i on j]`, where `k` precedes `i` if
//! it sits in an earlier interval, or in the same interval with a smaller index.
//! Taking expectations gives a function that is linear in each task's
//! placement probabilities. [`dis_schedule`] exploits this to fix placements
//! one task at a time without ever increasing the expectation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SchedError};
use crate::greedy::{list_schedule, EwTracker, TieRule};
use crate::lp::LpSolution;
use crate::model::{Instance, Schedule};
use crate::TOL;

/// Maximum deviation of a task's placement mass from 1.
pub const MASS_TOL: f64 = 1e-7;

/// Placement probabilities `p_{ijℓ} = y_{ijℓ}|I_ℓ|/τ_i`.
///
/// Small negative LP values are clipped to zero and each task's row is
/// rescaled to sum to exactly 1.
#[derive(Debug, Clone)]
pub struct PlacementDistribution {
    n: usize,
    m: usize,
    k: usize,
    p: Vec<f64>,
    left: Vec<f64>,
}

impl PlacementDistribution {
    pub fn from_lp(instance: &Instance, sol: &LpSolution) -> Result<Self> {
        let (n, m, k) = (sol.num_tasks(), sol.num_workers(), sol.num_intervals());
        if n != instance.n() || m != instance.m() {
            return Err(SchedError::Input(format!(
                "LP solution is for {n} tasks and {m} workers, instance has {} and {}",
                instance.n(),
                instance.m()
            )));
        }
        let grid = sol.grid();
        let mut p = vec![0.0; n * m * k];
        for i in 0..n {
            let tau = instance.tasks()[i].rst;
            let row = &mut p[i * m * k..(i + 1) * m * k];
            for j in 0..m {
                for l in 0..k {
                    row[j * k + l] = (sol.y(i, j, l) * grid.length(l) / tau).max(0.0);
                }
            }
            let mass: f64 = row.iter().sum();
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(SchedError::Input(format!(
                    "placement mass of task {} is {mass}, expected 1",
                    i + 1
                )));
            }
            row.iter_mut().for_each(|v| *v /= mass);
        }
        let left = (0..k).map(|l| grid.left(l)).collect();
        Ok(Self { n, m, k, p, left })
    }

    pub fn num_tasks(&self) -> usize {
        self.n
    }

    pub fn num_workers(&self) -> usize {
        self.m
    }

    pub fn num_intervals(&self) -> usize {
        self.k
    }

    pub fn prob(&self, i: usize, j: usize, l: usize) -> f64 {
        self.p[(i * self.m + j) * self.k + l]
    }

    /// Row of task `i`, indexed by `j·K + ℓ`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.m * self.k;
        &self.p[i * w..(i + 1) * w]
    }

    /// `((j, ℓ), p)` for every positive-probability placement of task `i`.
    pub fn atoms(&self, i: usize) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        let k = self.k;
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(c, &p)| ((c / k, c % k), p))
    }

    /// Left endpoint of `I_ℓ`.
    pub fn start(&self, l: usize) -> f64 {
        self.left[l]
    }

    fn sample(&self, i: usize, rng: &mut impl Rng) -> (usize, usize) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for ((j, l), p) in self.atoms(i) {
            acc += p;
            last = Some((j, l));
            if u < acc {
                return (j, l);
            }
        }
        last.expect("distribution has positive mass")
    }
}

/// Order among tasks that land in the same interval on the same worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum RisTies {
    #[default]
    Random,
    Index,
}

/// Per-worker lists ordered by `(ℓ, index)`.
fn lists_by_interval(m: usize, placement: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); m];
    for (i, &(j, _)) in placement.iter().enumerate() {
        lists[j].push(i);
    }
    for list in &mut lists {
        list.sort_by_key(|&i| (placement[i].1, i));
    }
    lists
}

fn placed_schedule(dist: &PlacementDistribution, placement: &[(usize, usize)], lists: Vec<Vec<usize>>) -> Schedule {
    let key = placement.iter().map(|&(_, l)| dist.start(l)).collect();
    Schedule::new(lists, placement.len())
        .expect("every task placed once")
        .with_placement_key(key)
}

/// Randomized rounding with a seeded ChaCha generator.
pub fn ris_round(instance: &Instance, sol: &LpSolution, seed: u64) -> Result<Schedule> {
    let dist = PlacementDistribution::from_lp(instance, sol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ris_round_with(&dist, &mut rng, RisTies::Random))
}

/// One draw: independent placements, then same-interval ties by `ties`.
pub fn ris_round_with(dist: &PlacementDistribution, rng: &mut impl Rng, ties: RisTies) -> Schedule {
    let placement: Vec<(usize, usize)> = (0..dist.n).map(|i| dist.sample(i, rng)).collect();
    let mut lists = lists_by_interval(dist.m, &placement);
    if ties == RisTies::Random {
        for list in &mut lists {
            let mut start = 0;
            while start < list.len() {
                let l = placement[list[start]].1;
                let end = start + list[start..].iter().take_while(|&&i| placement[i].1 == l).count();
                list[start..end].shuffle(rng);
                start = end;
            }
        }
    }
    placed_schedule(dist, &placement, lists)
}

/// Placement decisions made so far on top of a [`PlacementDistribution`].
#[derive(Debug, Clone)]
pub struct DisState<'a> {
    dist: &'a PlacementDistribution,
    decided: Vec<Option<(usize, usize)>>,
}

impl<'a> DisState<'a> {
    pub fn new(dist: &'a PlacementDistribution) -> Self {
        Self {
            dist,
            decided: vec![None; dist.n],
        }
    }

    pub fn decide(&mut self, i: usize, j: usize, l: usize) {
        debug_assert!(self.decided[i].is_none(), "task {i} decided twice");
        self.decided[i] = Some((j, l));
    }

    pub fn placement(&self, i: usize) -> Option<(usize, usize)> {
        self.decided[i]
    }

    pub fn num_decided(&self) -> usize {
        self.decided.iter().flatten().count()
    }

    /// Probability that `i` sits at `(j, ℓ)` given the decisions.
    pub fn q(&self, i: usize, j: usize, l: usize) -> f64 {
        match self.decided[i] {
            Some(p) => f64::from(p == (j, l)),
            None => self.dist.prob(i, j, l),
        }
    }

    fn write_row(&self, i: usize, out: &mut [f64]) {
        match self.decided[i] {
            Some((j, l)) => {
                out.fill(0.0);
                out[j * self.dist.k + l] = 1.0;
            }
            None => out.copy_from_slice(self.dist.row(i)),
        }
    }
}

/// Conditional expectation of `Σ w_i C_i` given the decided placements, the
/// rest drawn independently, and same-interval ties broken by index.
pub fn expected_wct(state: &DisState, instance: &Instance) -> f64 {
    let (n, m, k) = (state.dist.n, state.dist.m, state.dist.k);
    let tasks = instance.tasks();
    let contact = instance.contacts();
    let w = m * k;
    let mut q = vec![0.0; n * w];
    for i in 0..n {
        state.write_row(i, &mut q[i * w..(i + 1) * w]);
    }
    // before[c]: Σ_k τ_k q_k over all intervals of worker j earlier than ℓ.
    let mut slot = vec![0.0; w];
    for i in 0..n {
        for c in 0..w {
            slot[c] += tasks[i].rst * q[i * w + c];
        }
    }
    let mut before = vec![0.0; w];
    for j in 0..m {
        let mut acc = 0.0;
        for l in 0..k {
            before[j * k + l] = acc;
            acc += slot[j * k + l];
        }
    }
    let mut lower = vec![0.0; w];
    let mut total = 0.0;
    for i in 0..n {
        let qi = &q[i * w..(i + 1) * w];
        let tau = tasks[i].rst;
        let mut ec = 0.0;
        for j in 0..m {
            let mut own_before = 0.0;
            for l in 0..k {
                let c = j * k + l;
                if qi[c] != 0.0 {
                    let others = before[c] - tau * own_before + lower[c];
                    ec += qi[c] * (contact[j] + tau + others);
                }
                own_before += qi[c];
            }
        }
        total += tasks[i].weight * ec;
        for c in 0..w {
            lower[c] += tau * qi[c];
        }
    }
    total
}

/// One derandomization step.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DisStep {
    pub task: usize,
    pub worker: usize,
    pub interval: usize,
    /// Conditional expectation before and after fixing the task.
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DisOptions {
    /// Recompute the full expectation after every step and compare with the
    /// incremental value.
    pub verify_full: bool,
}

#[derive(Debug, Clone)]
pub struct DisOutcome {
    pub schedule: Schedule,
    /// Expectation with nothing decided.
    pub initial_expectation: f64,
    pub steps: Vec<DisStep>,
}

/// Derandomized rounding.
pub fn dis_schedule(instance: &Instance, sol: &LpSolution) -> Result<Schedule> {
    Ok(dis_schedule_with(instance, sol, &DisOptions::default())?.schedule)
}

/// Derandomized rounding with the per-step log.
///
/// Tasks are fixed in ascending index order. For task `i` the expectation is
/// `R + Σ_{jℓ} q_{ijℓ}·g(j, ℓ)` with `R` independent of `i`'s placement, so
/// fixing `i` at the first minimizer of `g` (scanning `j`, then `ℓ`) changes it
/// by `g_min − Σ p·g ≤ 0`.
pub fn dis_schedule_with(instance: &Instance, sol: &LpSolution, opts: &DisOptions) -> Result<DisOutcome> {
    let dist = PlacementDistribution::from_lp(instance, sol)?;
    let (n, m, k) = (dist.n, dist.m, dist.k);
    let w = m * k;
    let tasks = instance.tasks();
    let contact = instance.contacts();
    let mut state = DisState::new(&dist);
    let initial = expected_wct(&state, instance);
    let mut current = initial;
    let mut steps = Vec::with_capacity(n);

    let mut q = vec![0.0; n * w];
    for i in 0..n {
        state.write_row(i, &mut q[i * w..(i + 1) * w]);
    }
    // Per (j, ℓ): τ-mass and w-mass of the other tasks, split by index relative to i.
    let mut tau_lo = vec![0.0; w];
    let mut tau_hi = vec![0.0; w];
    let mut w_lo = vec![0.0; w];
    let mut w_hi = vec![0.0; w];
    let mut g = vec![0.0; w];
    for i in 0..n {
        tau_lo.fill(0.0);
        tau_hi.fill(0.0);
        w_lo.fill(0.0);
        w_hi.fill(0.0);
        for (kk, t) in tasks.iter().enumerate() {
            if kk == i {
                continue;
            }
            let (ta, wa) = if kk < i {
                (&mut tau_lo, &mut w_lo)
            } else {
                (&mut tau_hi, &mut w_hi)
            };
            for (c, &v) in q[kk * w..(kk + 1) * w].iter().enumerate() {
                if v != 0.0 {
                    ta[c] += t.rst * v;
                    wa[c] += t.weight * v;
                }
            }
        }
        let (tau_i, w_i) = (tasks[i].rst, tasks[i].weight);
        for j in 0..m {
            let row = j * k..(j + 1) * k;
            // Weight of others placed strictly later on j, built from the right.
            let mut after = 0.0;
            for l in (0..k).rev() {
                let c = j * k + l;
                g[c] = tau_i * (after + w_hi[c]);
                after += w_lo[c] + w_hi[c];
            }
            let mut earlier = 0.0;
            for c in row {
                g[c] += w_i * (contact[j] + tau_i + earlier + tau_lo[c]);
                earlier += tau_lo[c] + tau_hi[c];
            }
        }
        let mean: f64 = dist.row(i).iter().zip(&g).map(|(p, g)| p * g).sum();
        let mut best = 0;
        for c in 1..w {
            if g[c] < g[best] {
                best = c;
            }
        }
        let (j, l) = (best / k, best % k);
        state.decide(i, j, l);
        let row = &mut q[i * w..(i + 1) * w];
        row.fill(0.0);
        row[best] = 1.0;

        let before = current;
        current += g[best] - mean;
        if opts.verify_full {
            let full = expected_wct(&state, instance);
            if (full - current).abs() > 1e-9 * full.abs().max(1.0) {
                return Err(SchedError::Solver(format!(
                    "incremental expectation {current} drifted from full recomputation {full} at task {}",
                    i + 1
                )));
            }
        }
        steps.push(DisStep {
            task: i,
            worker: j,
            interval: l,
            before,
            after: current,
        });
    }

    let placement: Vec<(usize, usize)> = (0..n).map(|i| state.placement(i).expect("all decided")).collect();
    let lists = lists_by_interval(m, &placement);
    Ok(DisOutcome {
        schedule: placed_schedule(&dist, &placement, lists),
        initial_expectation: initial,
        steps,
    })
}

/// List scheduling in non-decreasing LP completion time `C̄_i`, ties by index,
/// onto the worker with least expected workload.
pub fn mdis_schedule(instance: &Instance, sol: &LpSolution) -> Result<Schedule> {
    if sol.cbar.len() != instance.n() {
        return Err(SchedError::Input(format!(
            "LP solution carries {} completion times, instance has {} tasks",
            sol.cbar.len(),
            instance.n()
        )));
    }
    let mut order: Vec<usize> = (0..instance.n()).collect();
    order.sort_by(|&a, &b| sol.cbar[a].total_cmp(&sol.cbar[b]));
    let mut tracker = EwTracker::new(instance);
    let lists = list_schedule(instance, &order, &mut tracker, TieRule::SmallestWorkerIndex);
    Ok(Schedule::new(lists, instance.n())?.with_placement_key(sol.cbar.clone()))
}

/// Whether `after ≤ before + TOL` on every step.
pub fn steps_non_increasing(steps: &[DisStep]) -> bool {
    steps.iter().all(|s| s.after <= s.before + TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::lrf_schedule;
    use crate::lp::relax;
    use crate::model::tests::four_task;
    use crate::model::weighted_completion;

    fn single() -> (Instance, LpSolution) {
        let inst = Instance::from_contacts(&[(1.0, 1.0)], &[1.0]).unwrap();
        let sol = relax(&inst, 0.5).unwrap();
        (inst, sol)
    }

    #[test]
    fn single_task_all_rounders() {
        let (inst, sol) = single();
        let s = ris_round(&inst, &sol, 7).unwrap();
        assert_eq!(s.assignment(), &[vec![0]]);
        assert_eq!(s.placement_key(), Some(&[0.0][..]));
        assert_eq!(weighted_completion(&inst, &s).unwrap(), 2.0);

        let dist = PlacementDistribution::from_lp(&inst, &sol).unwrap();
        assert!((expected_wct(&DisState::new(&dist), &inst) - 2.0).abs() < 1e-12);

        let out = dis_schedule_with(&inst, &sol, &DisOptions { verify_full: true }).unwrap();
        assert_eq!(out.steps.len(), 1);
        assert_eq!((out.steps[0].worker, out.steps[0].interval), (0, 0));
        assert_eq!(weighted_completion(&inst, &out.schedule).unwrap(), 2.0);

        let s = mdis_schedule(&inst, &sol).unwrap();
        assert_eq!(weighted_completion(&inst, &s).unwrap(), 2.0);
    }

    fn sample_instance() -> Instance {
        Instance::from_rates(
            &[(3.0, 2.0), (1.0, 5.0), (4.0, 1.0), (2.0, 2.0), (1.5, 3.0)],
            &[1.0, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn fully_decided_expectation_is_schedule_wct() {
        let inst = sample_instance();
        let sol = relax(&inst, 0.5).unwrap();
        let dist = PlacementDistribution::from_lp(&inst, &sol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = ris_round_with(&dist, &mut rng, RisTies::Index);
            let key = s.placement_key().unwrap().to_vec();
            let mut state = DisState::new(&dist);
            for (j, list) in s.assignment().iter().enumerate() {
                for &i in list {
                    let l = (0..dist.num_intervals()).find(|&l| dist.start(l) == key[i]).unwrap();
                    state.decide(i, j, l);
                }
            }
            let wct = weighted_completion(&inst, &s).unwrap();
            assert!((expected_wct(&state, &inst) - wct).abs() < 1e-9 * wct);
        }
    }

    #[test]
    fn dis_incremental_matches_full_and_never_increases() {
        let inst = sample_instance();
        for &eta in &[0.5, 1.0] {
            let sol = relax(&inst, eta).unwrap();
            let out = dis_schedule_with(&inst, &sol, &DisOptions { verify_full: true }).unwrap();
            assert!(steps_non_increasing(&out.steps));
            let wct = weighted_completion(&inst, &out.schedule).unwrap();
            assert!((wct - out.steps.last().unwrap().after).abs() < 1e-9 * wct);
            assert!(wct <= out.initial_expectation + 1e-6);
        }
    }

    #[test]
    fn dis_is_deterministic() {
        let inst = sample_instance();
        let sol = relax(&inst, 0.5).unwrap();
        let a = dis_schedule(&inst, &sol).unwrap();
        let b = dis_schedule(&inst, &sol).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ris_placement_frequencies() {
        // Two equal tasks on two equal workers: the LP splits mass across workers.
        let inst = Instance::from_contacts(&[(1.0, 1.0), (1.0, 1.0)], &[1.0, 1.0]).unwrap();
        let sol = relax(&inst, 1.0).unwrap();
        let dist = PlacementDistribution::from_lp(&inst, &sol).unwrap();
        let p0: f64 = (0..dist.num_intervals()).map(|l| dist.prob(0, 0, l)).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|_| ris_round_with(&dist, &mut rng, RisTies::Random).worker_of()[0] == 0)
            .count();
        assert!((hits as f64 / draws as f64 - p0).abs() < 0.02);
    }

    #[test]
    fn mdis_follows_lp_order_on_equal_ratios() {
        // Equal ratios, so the greedy order is plain index order with the long task first.
        let inst = Instance::from_contacts(&[(10.0, 10.0), (1.0, 1.0), (1.0, 1.0), (2.0, 2.0)], &[2.0, 6.0]).unwrap();
        let sol = relax(&inst, 0.5).unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| sol.cbar[a].total_cmp(&sol.cbar[b]));
        assert_eq!(*order.last().unwrap(), 0, "{:?}", sol.cbar);
        let mdis = mdis_schedule(&inst, &sol).unwrap();
        let lrf = lrf_schedule(&inst, TieRule::SmallestWorkerIndex);
        assert_ne!(mdis.assignment(), lrf.assignment());
    }

    #[test]
    fn mdis_not_worse_than_lrf_on_counterexample() {
        let inst = four_task(10.0);
        let sol = relax(&inst, 0.5).unwrap();
        let a = weighted_completion(&inst, &mdis_schedule(&inst, &sol).unwrap()).unwrap();
        let b = weighted_completion(&inst, &lrf_schedule(&inst, TieRule::SmallestWorkerIndex)).unwrap();
        assert!(a <= b, "mdis {a} vs lrf {b}");
    }

    #[test]
    fn mass_check() {
        let inst = sample_instance();
        let sol = relax(&inst, 0.5).unwrap();
        let other = Instance::from_rates(&[(1.0, 1.0)], &[1.0, 0.5]).unwrap();
        assert!(matches!(PlacementDistribution::from_lp(&other, &sol), Err(SchedError::Input(_))));
    }
}
