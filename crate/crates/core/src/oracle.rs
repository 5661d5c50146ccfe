//! Exact optima for small instances and checks of the approximation guarantees.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SchedError};
use crate::greedy::{lrf_schedule, TieRule};
use crate::model::{smith_order, weighted_completion, Instance, Schedule};
use crate::{Algorithm, TOL};

/// Largest assignment space `m^n` that [`brute_optimum`] will enumerate.
pub const BRUTE_LIMIT: f64 = 1e7;

/// Largest task count accepted by [`exhaustive_optimum`].
pub const EXHAUSTIVE_MAX_TASKS: usize = 8;

/// Minimum-WCT schedule over all task-to-worker assignments, each worker
/// processing its tasks in Smith order.
///
/// Workers with identical contact times are interchangeable, so assignments are
/// enumerated only up to relabeling within each such group. Among optimal
/// assignments the one with the smallest base-`m` code (digits in Smith order)
/// is returned.
pub fn brute_optimum(instance: &Instance) -> Result<(Schedule, f64)> {
    let (n, m) = (instance.n(), instance.m());
    let space = (m as f64).powi(n as i32);
    if space > BRUTE_LIMIT {
        return Err(SchedError::TooLarge(format!(
            "{m}^{n} = {space:.3e} assignments exceeds the limit of {BRUTE_LIMIT:.0e}"
        )));
    }
    let order = smith_order(instance.tasks());
    let search = Search::new(instance, &order);
    if n == 0 {
        let s = Schedule::new(vec![Vec::new(); m], 0)?;
        return Ok((s, 0.0));
    }

    // Split on the first two Smith positions and search the subtrees in parallel.
    let depth = n.min(2);
    let prefixes = search.prefixes(depth);
    let best = prefixes
        .into_par_iter()
        .filter_map(|prefix| search.best_with_prefix(&prefix))
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .expect("at least one assignment");

    let mut lists = vec![Vec::new(); m];
    for (p, &j) in best.digits.iter().enumerate() {
        lists[j].push(order[p]);
    }
    let schedule = Schedule::new(lists, n)?;
    let wct = weighted_completion(instance, &schedule)?;
    Ok((schedule, wct))
}

#[derive(Debug, Clone)]
struct Best {
    wct: f64,
    digits: Vec<usize>,
}

fn better(a: &Best, b: &Best) -> bool {
    a.wct < b.wct || (a.wct == b.wct && a.digits < b.digits)
}

struct Search {
    m: usize,
    rst: Vec<f64>,
    weight: Vec<f64>,
    contact: Vec<f64>,
    /// Previous worker with the same contact time, if any.
    twin: Vec<Option<usize>>,
}

impl Search {
    fn new(instance: &Instance, order: &[usize]) -> Self {
        let contact = instance.contacts();
        let twin = (0..contact.len())
            .map(|j| (0..j).rev().find(|&k| contact[k] == contact[j]))
            .collect();
        Self {
            m: instance.m(),
            rst: order.iter().map(|&i| instance.tasks()[i].rst).collect(),
            weight: order.iter().map(|&i| instance.tasks()[i].weight).collect(),
            contact,
            twin,
        }
    }

    fn allowed(&self, j: usize, used: &[usize]) -> bool {
        self.twin[j].map_or(true, |k| used[k] > 0)
    }

    fn prefixes(&self, depth: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut used = vec![0; self.m];
        let mut prefix = Vec::with_capacity(depth);
        self.collect_prefixes(depth, &mut used, &mut prefix, &mut out);
        out
    }

    fn collect_prefixes(&self, depth: usize, used: &mut [usize], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == depth {
            out.push(prefix.clone());
            return;
        }
        for j in 0..self.m {
            if self.allowed(j, used) {
                used[j] += 1;
                prefix.push(j);
                self.collect_prefixes(depth, used, prefix, out);
                prefix.pop();
                used[j] -= 1;
            }
        }
    }

    fn best_with_prefix(&self, prefix: &[usize]) -> Option<Best> {
        let mut load = self.contact.clone();
        let mut used = vec![0; self.m];
        let mut cost = 0.0;
        for (p, &j) in prefix.iter().enumerate() {
            load[j] += self.rst[p];
            cost += self.weight[p] * load[j];
            used[j] += 1;
        }
        let mut digits = prefix.to_vec();
        let mut best: Option<Best> = None;
        self.dfs(&mut load, &mut used, &mut digits, cost, &mut best);
        best
    }

    fn dfs(&self, load: &mut [f64], used: &mut [usize], digits: &mut Vec<usize>, cost: f64, best: &mut Option<Best>) {
        let p = digits.len();
        if p == self.rst.len() {
            let cand = Best {
                wct: cost,
                digits: digits.clone(),
            };
            if best.as_ref().map_or(true, |b| better(&cand, b)) {
                *best = Some(cand);
            }
            return;
        }
        for j in 0..self.m {
            if !self.allowed(j, used) {
                continue;
            }
            load[j] += self.rst[p];
            used[j] += 1;
            digits.push(j);
            self.dfs(load, used, digits, cost + self.weight[p] * load[j], best);
            digits.pop();
            used[j] -= 1;
            load[j] -= self.rst[p];
        }
    }
}

/// Minimum WCT over every assignment and every processing order on every
/// worker. Makes no use of Smith's rule; intended to validate [`brute_optimum`].
pub fn exhaustive_optimum(instance: &Instance) -> Result<(Schedule, f64)> {
    let (n, m) = (instance.n(), instance.m());
    if n > EXHAUSTIVE_MAX_TASKS || (m as f64).powi(n as i32) > 1e6 {
        return Err(SchedError::TooLarge(format!(
            "exhaustive search limited to n ≤ {EXHAUSTIVE_MAX_TASKS} and m^n ≤ 1e6 (got n={n}, m={m})"
        )));
    }
    let total = m.pow(n as u32);
    let contact = instance.contacts();
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for code in 0..total {
        let mut lists = vec![Vec::new(); m];
        let mut c = code;
        for i in 0..n {
            lists[c % m].push(i);
            c /= m;
        }
        let mut wct = 0.0;
        let mut ordered = Vec::with_capacity(m);
        for (j, list) in lists.iter().enumerate() {
            let (cost, perm) = best_permutation(instance, contact[j], list);
            wct += cost;
            ordered.push(perm);
        }
        if best.as_ref().map_or(true, |(b, _)| wct < *b) {
            best = Some((wct, ordered));
        }
    }
    let (_, lists) = best.unwrap_or((0.0, vec![Vec::new(); m]));
    let schedule = Schedule::new(lists, n)?;
    let wct = weighted_completion(instance, &schedule)?;
    Ok((schedule, wct))
}

/// Cheapest order of `tasks` on one worker, by trying every permutation.
fn best_permutation(instance: &Instance, contact: f64, tasks: &[usize]) -> (f64, Vec<usize>) {
    fn rec(
        instance: &Instance,
        rest: &mut Vec<usize>,
        prefix: &mut Vec<usize>,
        clock: f64,
        cost: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if rest.is_empty() {
            if cost < best.0 {
                *best = (cost, prefix.clone());
            }
            return;
        }
        for k in 0..rest.len() {
            let i = rest.remove(k);
            let t = instance.tasks()[i];
            let done = clock + t.rst;
            prefix.push(i);
            rec(instance, rest, prefix, done, cost + t.weight * done, best);
            prefix.pop();
            rest.insert(k, i);
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    rec(instance, &mut tasks.to_vec(), &mut Vec::new(), contact, 0.0, &mut best);
    best
}

/// Terms of the parallel-machine lower bound adapted to contact times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EastmanTerms {
    /// `Σ_j w_j Σ_{i≤j} τ_i` over the task sequence.
    pub m1: f64,
    /// `Σ w_i τ_i`.
    pub mn: f64,
    /// `Σ_j Σ_{i∈S_j} w_i e_j` for the given schedule.
    pub m_lambda: f64,
}

/// `M1` runs over Smith order when `ratio_sorted`, over index order otherwise.
pub fn eastman_terms(instance: &Instance, schedule: &Schedule, ratio_sorted: bool) -> EastmanTerms {
    let tasks = instance.tasks();
    let order: Vec<usize> = if ratio_sorted {
        smith_order(tasks)
    } else {
        (0..tasks.len()).collect()
    };
    let mut prefix = 0.0;
    let mut m1 = 0.0;
    for &i in &order {
        prefix += tasks[i].rst;
        m1 += tasks[i].weight * prefix;
    }
    let mn = tasks.iter().map(|t| t.weight * t.rst).sum();
    let m_lambda = schedule
        .assignment()
        .iter()
        .zip(instance.workers())
        .map(|(list, w)| w.contact * list.iter().map(|&i| tasks[i].weight).sum::<f64>())
        .sum();
    EastmanTerms { m1, mn, m_lambda }
}

/// Four-task, two-worker instance on which the contact-adjusted Eastman bound fails.
pub fn counterexample_instance(t: f64) -> Result<Instance> {
    Instance::from_contacts(&[(1.0, 1.0), (1.0, 1.0), (2.0, 2.0), (t, t)], &[2.0, 6.0])
}

/// Outcome of checking `WCT_OPT ≥ M1/m + (m−1)/(2m)·Mn + MΛ` on the counterexample family.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub t: f64,
    pub terms: EastmanTerms,
    /// Right-hand side of the bound.
    pub rhs: f64,
    /// Closed form `T² + 2T + 35`, the optimum for `T ≥ 8`.
    pub wct_opt_closed_form: f64,
    /// Exact optimum from enumeration.
    pub wct_opt: f64,
    /// Bound fails with the closed-form optimum; equivalent to `(T−4)(T−20) < 0`.
    pub violated: bool,
    /// Bound fails with the enumerated optimum.
    pub violated_exact: bool,
    pub opt_schedule: Vec<Vec<usize>>,
}

/// Evaluates the bound at `T`. `MΛ` is taken from the list schedule that
/// sends the last task to the slow worker (the greedy schedule with ties
/// resolved toward the larger contact), independent of `T`.
pub fn verify_counterexample(t: f64) -> Result<CounterexampleReport> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(SchedError::Domain(format!("T must be positive, got {t}")));
    }
    let inst = counterexample_instance(t)?;
    let m = inst.m() as f64;
    let lrf = lrf_schedule(&inst, TieRule::LargestContact);
    let terms = eastman_terms(&inst, &lrf, true);
    let rhs = terms.m1 / m + (m - 1.0) / (2.0 * m) * terms.mn + terms.m_lambda;
    let closed = t * t + 2.0 * t + 35.0;
    let (opt, wct_opt) = brute_optimum(&inst)?;
    let tol = TOL * rhs.max(1.0);
    Ok(CounterexampleReport {
        t,
        terms,
        rhs,
        wct_opt_closed_form: closed,
        wct_opt,
        violated: closed < rhs - tol,
        violated_exact: wct_opt < rhs - tol,
        opt_schedule: opt.assignment().to_vec(),
    })
}

/// What a bound's ratio is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Exact optimum.
    Opt,
    /// LP objective; a lower bound on the optimum, so ratios are conservative.
    Lp,
}

/// One approximation guarantee checked on one instance.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub bound: &'static str,
    pub algorithm: Algorithm,
    pub wct_alg: f64,
    pub wct_ref: f64,
    pub reference: Reference,
    pub ratio: f64,
    pub alpha: f64,
    /// Whether the bound's hypotheses hold on this instance.
    pub applicable: bool,
    pub pass: bool,
}

/// Offline greedy factor `max{3/2, w_max λ_max / (w_min λ_min)}`.
pub fn lrf_alpha(instance: &Instance) -> f64 {
    let spread = instance.w_max() * instance.lambda_max() / (instance.w_min() * instance.lambda_min());
    spread.max(1.5)
}

/// Hypothesis `τ_min > 2/λ_max` and `n ≥ m` of the `2 − 1/m` greedy bound.
pub fn large_tasks(instance: &Instance) -> bool {
    instance.tau_min() > 2.0 / instance.lambda_max() && instance.n() >= instance.m()
}

/// Hypothesis `2·e_min + τ_min ≥ (1−η)/η`, with `e_min = min_j e_j`.
pub fn large_contact(instance: &Instance, eta: f64) -> bool {
    2.0 * instance.e_min() + instance.tau_min() >= (1.0 - eta) / eta
}

/// Randomized rounding factor on the expected WCT.
pub fn ris_alpha(eta: f64) -> f64 {
    1.5 + eta / 2.0
}

/// Derandomized rounding factor: `max{2.5, 1+η}`, or `1.5+η` under [`large_contact`].
pub fn dis_alpha(instance: &Instance, eta: f64) -> f64 {
    if large_contact(instance, eta) {
        (1.5 + eta).min(2.5f64.max(1.0 + eta))
    } else {
        2.5f64.max(1.0 + eta)
    }
}

/// Additive online penalty `1 + n·w_max·(2/λ_min) / (w_min·Στ)`.
pub fn online_penalty(instance: &Instance) -> f64 {
    let n = instance.n() as f64;
    1.0 + n * instance.w_max() * (2.0 / instance.lambda_min()) / (instance.w_min() * instance.total_rst())
}

/// Checks every guarantee that applies to the supplied results.
///
/// `results` pairs each algorithm with its WCT (for RIS, a mean over draws,
/// since its guarantee is on the expectation). Greedy and online bounds are
/// measured against `opt` when given, else against the LP objective; rounding
/// bounds are always measured against the LP objective.
pub fn audit_bounds(
    instance: &Instance,
    results: &[(Algorithm, f64)],
    lp_objective: f64,
    opt: Option<f64>,
    eta: f64,
) -> Vec<BoundReport> {
    let (opt_ref, opt_kind) = match opt {
        Some(v) => (v, Reference::Opt),
        None => (lp_objective, Reference::Lp),
    };
    let mut out = Vec::new();
    let mut push = |bound, algorithm, wct_alg: f64, wct_ref: f64, reference, alpha: f64, applicable: bool| {
        let ratio = if wct_ref > 0.0 { wct_alg / wct_ref } else { 1.0 };
        out.push(BoundReport {
            bound,
            algorithm,
            wct_alg,
            wct_ref,
            reference,
            ratio,
            alpha,
            applicable,
            pass: !applicable || ratio <= alpha + TOL,
        });
    };
    let m = instance.m() as f64;
    for &(alg, wct) in results {
        match alg {
            Algorithm::Lrf => {
                push("lrf-spread", alg, wct, opt_ref, opt_kind, lrf_alpha(instance), true);
                push("lrf-large-tasks", alg, wct, opt_ref, opt_kind, 2.0 - 1.0 / m, large_tasks(instance));
            }
            Algorithm::Ris => {
                push("ris-expected", alg, wct, lp_objective, Reference::Lp, ris_alpha(eta), true);
            }
            Algorithm::Dis => {
                push("dis", alg, wct, lp_objective, Reference::Lp, 2.5f64.max(1.0 + eta), true);
                push(
                    "dis-large-contact",
                    alg,
                    wct,
                    lp_objective,
                    Reference::Lp,
                    1.5 + eta,
                    large_contact(instance, eta),
                );
            }
            Algorithm::Cosmos => {
                let alpha = if large_tasks(instance) { 2.0 - 1.0 / m } else { lrf_alpha(instance) };
                push("cosmos", alg, wct, opt_ref, opt_kind, alpha * online_penalty(instance), true);
            }
            Algorithm::Odis => {
                let alpha = if large_contact(instance, eta) {
                    1.5 + eta
                } else {
                    2.0f64.max(1.0 + eta) + 0.5
                };
                push("odis", alg, wct, opt_ref, opt_kind, alpha * online_penalty(instance), true);
            }
            Algorithm::Mdis => {}
        }
    }
    out
}
