//! Meeting-driven replanning.
//!
//! The requester only hands a batch to worker `j` when it actually meets `j`.
//! At that moment the remaining distribution wait of `j` is over (its contact
//! drops to the feedback leg `1/λ_j`) while every other worker still owes
//! `2/λ_k`, of which `1/λ_j` has effectively already elapsed. The requester
//! replans all remaining tasks under these contacts and commits only `j`'s
//! batch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::greedy::{list_schedule, EwTracker, TieRule};
use crate::lp::relax;
use crate::model::{smith_order, weighted_completion, Instance, Schedule, Worker};
use crate::rounding::dis_schedule;

/// Realized first meetings, in time order, with optional feedback delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingTrace {
    meetings: Vec<(usize, f64)>,
    /// Feedback delay `t'_j` per worker index.
    feedback: Option<Vec<f64>>,
}

impl MeetingTrace {
    /// Validates nonnegative, strictly increasing times with each worker at most once.
    pub fn new(meetings: Vec<(usize, f64)>, feedback: Option<Vec<f64>>) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        let mut seen = std::collections::HashSet::new();
        for &(j, t) in &meetings {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(SchedError::Input(format!("meeting time {t} for worker {} is invalid", j + 1)));
            }
            if t <= prev {
                return Err(SchedError::Input("meeting times must be strictly increasing".into()));
            }
            if !seen.insert(j) {
                return Err(SchedError::Input(format!("worker {} met twice", j + 1)));
            }
            prev = t;
        }
        if let Some(fb) = &feedback {
            if fb.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                return Err(SchedError::Input("feedback delays must be nonnegative".into()));
            }
        }
        Ok(Self { meetings, feedback })
    }

    /// Meetings in the given worker order at times 1, 2, …, without feedback delays.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        Self::new(order.iter().enumerate().map(|(s, &j)| (j, (s + 1) as f64)).collect(), None)
    }

    pub fn meetings(&self) -> &[(usize, f64)] {
        &self.meetings
    }

    pub fn feedback(&self) -> Option<&[f64]> {
        self.feedback.as_deref()
    }

    pub fn len(&self) -> usize {
        self.meetings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meetings.is_empty()
    }

    /// Meeting time of each worker.
    pub fn time_of(&self, m: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; m];
        for &(j, t) in &self.meetings {
            if j < m {
                out[j] = Some(t);
            }
        }
        out
    }

    fn check_covers(&self, m: usize) -> Result<()> {
        let times = self.time_of(m);
        if self.meetings.iter().any(|&(j, _)| j >= m) || times.iter().any(Option::is_none) || self.len() != m {
            return Err(SchedError::Input(format!(
                "trace must meet each of the {m} workers exactly once"
            )));
        }
        Ok(())
    }
}

/// Draws each worker's first meeting time and feedback delay from `Exp(λ_j)`.
pub fn sample_meetings(workers: &[Worker], seed: u64) -> Result<MeetingTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meetings = Vec::with_capacity(workers.len());
    let mut feedback = Vec::with_capacity(workers.len());
    for (j, w) in workers.iter().enumerate() {
        let exp = Exp::new(w.rate).map_err(|e| SchedError::Domain(format!("rate {}: {e}", w.rate)))?;
        meetings.push((j, exp.sample(&mut rng)));
        feedback.push(exp.sample(&mut rng));
    }
    meetings.sort_by(|a, b| a.1.total_cmp(&b.1));
    MeetingTrace::new(meetings, Some(feedback))
}

/// How offsets before each worker's first task are charged when evaluating an online schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// `t_j + 1/λ_j`: realized distribution meeting, expected feedback leg.
    #[default]
    Realized,
    /// `2/λ_j`.
    Expected,
    /// `t_j + t'_j`: both legs realized.
    Sampled,
}

impl std::str::FromStr for EvalMode {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realized" => Ok(Self::Realized),
            "expected" => Ok(Self::Expected),
            "sampled" => Ok(Self::Sampled),
            _ => Err(SchedError::Input(format!("unknown evaluation mode '{s}'"))),
        }
    }
}

/// Offset before worker `j`'s first task under `mode`.
pub fn offsets(instance: &Instance, trace: &MeetingTrace, mode: EvalMode) -> Result<Vec<f64>> {
    let m = instance.m();
    let times = trace.time_of(m);
    let rates: Vec<f64> = instance.workers().iter().map(|w| w.rate).collect();
    (0..m)
        .map(|j| match mode {
            EvalMode::Expected => Ok(2.0 / rates[j]),
            EvalMode::Realized => times[j]
                .map(|t| t + 1.0 / rates[j])
                .ok_or_else(|| SchedError::Input(format!("worker {} never met", j + 1))),
            EvalMode::Sampled => {
                let t = times[j].ok_or_else(|| SchedError::Input(format!("worker {} never met", j + 1)))?;
                let fb = trace
                    .feedback()
                    .ok_or_else(|| SchedError::Input("trace carries no feedback delays".into()))?;
                Ok(t + fb[j])
            }
        })
        .collect()
}

/// WCT of `schedule` with per-worker offsets given by `mode`.
pub fn evaluate(instance: &Instance, schedule: &Schedule, trace: &MeetingTrace, mode: EvalMode) -> Result<f64> {
    let shifted = instance.with_contacts(&offsets(instance, trace, mode)?)?;
    weighted_completion(&shifted, schedule)
}

/// State after one meeting.
#[derive(Debug, Clone, Serialize)]
pub struct OnlineStep {
    pub worker: usize,
    pub time: f64,
    /// Tasks still uncommitted when the meeting happened.
    pub remaining: Vec<usize>,
    /// Planning contact (or initial workload) used for each worker still in play.
    pub contacts: Vec<(usize, f64)>,
    /// Batch handed to `worker`, in processing order.
    pub committed: Vec<usize>,
    /// WCT of committed batches plus the current plan for unmet workers.
    pub wct: f64,
}

/// Per-meeting log of an online run.
///
/// `wct` values price a committed batch at its commit-time contact `1/λ_j`
/// and a planned batch of an unmet worker at its full contact `2/λ_k`.
/// `initial_wct` is the offline plan made before any meeting.
#[derive(Debug, Clone, Default, Serialize)]
pub struct OnlineStepLog {
    pub initial_wct: f64,
    pub steps: Vec<OnlineStep>,
    pub warnings: Vec<String>,
}

impl OnlineStepLog {
    /// `WCT_0, WCT_1, …, WCT_m`.
    pub fn wct_sequence(&self) -> Vec<f64> {
        std::iter::once(self.initial_wct)
            .chain(self.steps.iter().map(|s| s.wct))
            .collect()
    }

    /// Whether the sequence never increases by more than `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.wct_sequence().windows(2).all(|w| w[1] <= w[0] + tol)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,worker,time,remaining,committed,wct\n");
        out.push_str(&format!("0,,,,,{}\n", self.initial_wct));
        for (s, st) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s + 1,
                st.worker + 1,
                st.time,
                st.remaining.len(),
                st.committed.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" "),
                st.wct
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CosmosOptions {
    /// Raise negative initial workloads `2/λ_k − 1/λ_j` to zero.
    pub clamp: bool,
    pub tie: TieRule,
}

/// Cost of per-worker batches, each starting at its offset.
fn batches_wct(instance: &Instance, batches: &[(f64, &[usize])]) -> f64 {
    let tasks = instance.tasks();
    let mut total = 0.0;
    for &(offset, list) in batches {
        let mut clock = offset;
        for &i in list {
            clock += tasks[i].rst;
            total += tasks[i].weight * clock;
        }
    }
    total
}

fn planning_contacts(
    instance: &Instance,
    met: usize,
    unmet: &[usize],
    clamp: bool,
    warnings: &mut Vec<String>,
) -> Vec<(usize, f64)> {
    let rate = |j: usize| instance.workers()[j].rate;
    let shift = 1.0 / rate(met);
    unmet
        .iter()
        .map(|&k| {
            if k == met {
                return (k, shift);
            }
            let v = 2.0 / rate(k) - shift;
            if v < 0.0 {
                warnings.push(format!(
                    "meeting worker {}: planning contact of worker {} is {v:.6} < 0{}",
                    met + 1,
                    k + 1,
                    if clamp { ", clamped to 0" } else { "" }
                ));
                if clamp {
                    return (k, 0.0);
                }
            }
            (k, v)
        })
        .collect()
}

/// Meeting-driven greedy replanning.
pub fn cosmos(instance: &Instance, trace: &MeetingTrace) -> Result<(Schedule, OnlineStepLog)> {
    cosmos_with(instance, trace, CosmosOptions::default())
}

/// At each meeting with `j`, seeds `EW_j = 1/λ_j` and `EW_k = 2/λ_k − 1/λ_j`
/// for the other unmet workers, list-schedules the remaining tasks in ratio
/// order and commits `j`'s share in that order.
///
/// Without clamping the seeds are the full contacts shifted by a common
/// constant, so the plan for the unmet workers is exactly the offline plan
/// restricted to them and the logged WCT never increases. Clamping can break
/// both properties.
pub fn cosmos_with(instance: &Instance, trace: &MeetingTrace, opts: CosmosOptions) -> Result<(Schedule, OnlineStepLog)> {
    let (n, m) = (instance.n(), instance.m());
    trace.check_covers(m)?;
    let tasks = instance.tasks();
    let contact = instance.contacts();
    let mut log = OnlineStepLog::default();

    let order = smith_order(tasks);
    let initial = list_schedule(instance, &order, &mut EwTracker::new(instance), opts.tie);
    log.initial_wct = batches_wct(
        instance,
        &initial.iter().enumerate().map(|(j, l)| (contact[j], l.as_slice())).collect::<Vec<_>>(),
    );

    let mut assigned = vec![false; n];
    let mut unmet: Vec<usize> = (0..m).collect();
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut committed_offset = vec![0.0; m];
    for &(j, time) in trace.meetings() {
        let remaining: Vec<usize> = order.iter().copied().filter(|&i| !assigned[i]).collect();
        let seeds = planning_contacts(instance, j, &unmet, opts.clamp, &mut log.warnings);

        let mut ew = vec![f64::INFINITY; m];
        for &(k, v) in &seeds {
            ew[k] = v;
        }
        let mut tracker = EwTracker::with_seeds(ew, contact.clone());
        let mut plan: Vec<Vec<usize>> = vec![Vec::new(); m];
        for &i in &remaining {
            let k = tracker.argmin_among(unmet.iter().copied(), opts.tie);
            plan[k].push(i);
            tracker.add(k, tasks[i].rst);
        }

        let batch = std::mem::take(&mut plan[j]);
        for &i in &batch {
            assigned[i] = true;
        }
        lists[j] = batch.clone();
        committed_offset[j] = 1.0 / instance.workers()[j].rate;
        unmet.retain(|&k| k != j);

        let mut priced: Vec<(f64, &[usize])> = Vec::with_capacity(m);
        for k in 0..m {
            if !unmet.contains(&k) {
                priced.push((committed_offset[k], lists[k].as_slice()));
            } else {
                priced.push((contact[k], plan[k].as_slice()));
            }
        }
        let wct = batches_wct(instance, &priced);
        log.steps.push(OnlineStep {
            worker: j,
            time,
            remaining,
            contacts: seeds,
            committed: batch,
            wct,
        });
    }
    for w in &log.warnings {
        log::warn!("{w}");
    }
    Ok((Schedule::new(lists, n)?, log))
}

/// Meeting-driven replanning with derandomized LP rounding.
///
/// At each meeting with `j` the LP is rebuilt over the remaining tasks and
/// unmet workers with contacts `1/λ_j` for `j` and `max(0, 2/λ_k − 1/λ_j)`
/// for the others (clamping is logged), and `j` receives the batch the
/// rounding assigns it, ordered by tentative start then index.
pub fn odis(instance: &Instance, trace: &MeetingTrace, eta: f64) -> Result<(Schedule, OnlineStepLog)> {
    let (n, m) = (instance.n(), instance.m());
    trace.check_covers(m)?;
    let contact = instance.contacts();
    let mut log = OnlineStepLog::default();
    if n > 0 {
        let offline = dis_schedule(instance, &relax(instance, eta)?)?;
        log.initial_wct = weighted_completion(instance, &offline)?;
    }

    let mut assigned = vec![false; n];
    let mut unmet: Vec<usize> = (0..m).collect();
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut committed_offset = vec![0.0; m];
    for &(j, time) in trace.meetings() {
        let remaining: Vec<usize> = (0..n).filter(|&i| !assigned[i]).collect();
        let seeds = planning_contacts(instance, j, &unmet, true, &mut log.warnings);
        let mut plan: Vec<Vec<usize>> = vec![Vec::new(); m];
        if !remaining.is_empty() {
            let sub = instance
                .restrict(&remaining, &unmet)?
                .with_contacts(&seeds.iter().map(|&(_, v)| v).collect::<Vec<_>>())?;
            let local = dis_schedule(&sub, &relax(&sub, eta)?)?;
            for (lj, list) in local.assignment().iter().enumerate() {
                plan[unmet[lj]] = list.iter().map(|&li| remaining[li]).collect();
            }
        }

        let batch = std::mem::take(&mut plan[j]);
        for &i in &batch {
            assigned[i] = true;
        }
        lists[j] = batch.clone();
        committed_offset[j] = 1.0 / instance.workers()[j].rate;
        unmet.retain(|&k| k != j);

        let priced: Vec<(f64, &[usize])> = (0..m)
            .map(|k| {
                if unmet.contains(&k) {
                    (contact[k], plan[k].as_slice())
                } else {
                    (committed_offset[k], lists[k].as_slice())
                }
            })
            .collect();
        let wct = batches_wct(instance, &priced);
        log.steps.push(OnlineStep {
            worker: j,
            time,
            remaining,
            contacts: seeds,
            committed: batch,
            wct,
        });
    }
    for w in &log.warnings {
        log::warn!("{w}");
    }
    Ok((Schedule::new(lists, n)?, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::lrf_schedule;
    use crate::rounding::dis_schedule;
    use proptest::prelude::*;

    #[test]
    fn race_order() {
        let workers = [Worker::from_rate(1e9), Worker::from_rate(1e-9)];
        let first = (0..1000)
            .filter(|&s| sample_meetings(&workers, s).unwrap().meetings()[0].0 == 0)
            .count();
        assert!(first >= 990);
        let one = sample_meetings(&[Worker::from_rate(3.0)], 1).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn exponential_mean() {
        let workers = [Worker::from_rate(2.0)];
        let draws = 10_000;
        let mean: f64 = (0..draws)
            .map(|s| sample_meetings(&workers, s).unwrap().meetings()[0].1)
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn trace_validation() {
        assert!(MeetingTrace::new(vec![(0, 2.0), (1, 1.0)], None).is_err());
        assert!(MeetingTrace::new(vec![(0, -1.0)], None).is_err());
        assert!(MeetingTrace::new(vec![(0, 1.0), (0, 2.0)], None).is_err());
        let inst = Instance::from_rates(&[(1.0, 1.0)], &[1.0, 2.0]).unwrap();
        let t = MeetingTrace::from_order(&[1]).unwrap();
        assert!(cosmos(&inst, &t).is_err());
    }

    #[test]
    fn single_worker_cosmos_is_lrf_with_half_contact() {
        let inst = Instance::from_rates(&[(3.0, 1.0), (1.0, 2.0), (2.0, 2.0)], &[0.5]).unwrap();
        let (s, log) = cosmos(&inst, &MeetingTrace::from_order(&[0]).unwrap()).unwrap();
        let half = inst.with_contacts(&[1.0 / 0.5]).unwrap();
        assert_eq!(s, lrf_schedule(&half, TieRule::SmallestWorkerIndex));
        assert_eq!(log.steps.len(), 1);
        assert!((log.steps[0].wct - weighted_completion(&half, &s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn first_step_seeds() {
        let inst = Instance::from_rates(&[(1.0, 1.0), (2.0, 1.0)], &[1.0, 0.5]).unwrap();
        let (_, log) = cosmos(&inst, &MeetingTrace::from_order(&[0, 1]).unwrap()).unwrap();
        assert_eq!(log.steps[0].contacts, vec![(0, 1.0), (1, 3.0)]);
    }

    #[test]
    fn negative_seed_warns_and_optionally_clamps() {
        let inst = Instance::from_rates(&[(1.0, 1.0), (2.0, 1.0), (1.0, 3.0)], &[0.1, 10.0]).unwrap();
        let trace = MeetingTrace::from_order(&[0, 1]).unwrap();
        let (_, log) = cosmos(&inst, &trace).unwrap();
        assert_eq!(log.steps[0].contacts[1], (1, 0.2 - 10.0));
        assert_eq!(log.warnings.len(), 1);
        let (_, log) = cosmos_with(&inst, &trace, CosmosOptions { clamp: true, ..Default::default() }).unwrap();
        assert_eq!(log.steps[0].contacts[1], (1, 0.0));
    }

    #[test]
    fn converges_to_offline_for_fast_meetings() {
        let inst = Instance::from_rates(&[(3.0, 1.0), (1.0, 2.0), (2.0, 2.0), (4.0, 1.0)], &[1e6, 5e5, 2e5]).unwrap();
        let (s, _) = cosmos(&inst, &MeetingTrace::from_order(&[0, 1, 2]).unwrap()).unwrap();
        assert_eq!(s, lrf_schedule(&inst, TieRule::SmallestWorkerIndex));
    }

    #[test]
    fn odis_single_worker_and_single_task() {
        let inst = Instance::from_rates(&[(3.0, 1.0), (1.0, 2.0), (2.0, 2.0)], &[0.5]).unwrap();
        let (s, _) = odis(&inst, &MeetingTrace::from_order(&[0]).unwrap(), 1.0).unwrap();
        let half = inst.with_contacts(&[2.0]).unwrap();
        assert_eq!(s.assignment(), dis_schedule(&half, &relax(&half, 1.0).unwrap()).unwrap().assignment());

        let inst = Instance::from_rates(&[(2.0, 3.0)], &[1.0, 0.25]).unwrap();
        let trace = MeetingTrace::from_order(&[1, 0]).unwrap();
        let (s, log) = odis(&inst, &trace, 1.0).unwrap();
        let j = s.worker_of()[0];
        let step = log.steps.iter().position(|st| st.worker == j).unwrap();
        assert_eq!(log.steps[step].committed, vec![0]);
        let e = log.steps[step].contacts.iter().find(|c| c.0 == j).unwrap().1;
        assert!((log.steps[step].wct - 3.0 * (e + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn evaluation_modes() {
        let inst = Instance::from_rates(&[(1.0, 1.0)], &[2.0]).unwrap();
        let trace = MeetingTrace::new(vec![(0, 0.3)], Some(vec![0.1])).unwrap();
        let s = Schedule::new(vec![vec![0]], 1).unwrap();
        assert!((evaluate(&inst, &s, &trace, EvalMode::Expected).unwrap() - 2.0).abs() < 1e-12);
        assert!((evaluate(&inst, &s, &trace, EvalMode::Realized).unwrap() - 1.8).abs() < 1e-12);
        assert!((evaluate(&inst, &s, &trace, EvalMode::Sampled).unwrap() - 1.4).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cosmos_monotone(
            tasks in prop::collection::vec((0.5f64..20.0, 0.5f64..10.0), 0..25),
            rates in prop::collection::vec(0.05f64..5.0, 1..6),
            seed in 0u64..1000,
        ) {
            let inst = Instance::from_rates(&tasks, &rates).unwrap();
            let trace = sample_meetings(inst.workers(), seed).unwrap();
            let (s, log) = cosmos(&inst, &trace).unwrap();
            prop_assert!(log.is_monotone(1e-9), "{:?}", log.wct_sequence());
            let lrf = weighted_completion(&inst, &lrf_schedule(&inst, TieRule::SmallestWorkerIndex)).unwrap();
            prop_assert!((log.initial_wct - lrf).abs() <= 1e-9 * lrf.max(1.0));
            // Committed batches are never revisited.
            for st in &log.steps {
                prop_assert_eq!(&s.assignment()[st.worker], &st.committed);
            }
        }
    }
}
