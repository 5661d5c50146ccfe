//! Problem data model and exact completion-time evaluation.
//!
//! Task and worker ids are 0-based positions internally and 1-based in every
//! serialized form.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Required service time `τ_i`.
    pub rst: f64,
    pub weight: f64,
}

impl Task {
    pub fn new(rst: f64, weight: f64) -> Self {
        Self { rst, weight }
    }

    /// Smith ratio `w_i / τ_i`.
    pub fn ratio(&self) -> f64 {
        self.weight / self.rst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worker {
    /// Meeting rate `λ_j` with the requester.
    pub rate: f64,
    /// Total contact time `e_j` paid by every task on this worker.
    pub contact: f64,
}

impl Worker {
    /// Worker whose contact time is the two expected meetings, `2/λ`.
    pub fn from_rate(rate: f64) -> Self {
        Self {
            rate,
            contact: 2.0 / rate,
        }
    }

    pub fn with_contact(rate: f64, contact: f64) -> Self {
        Self { rate, contact }
    }

    /// Expected meeting time `1/λ`.
    pub fn emt(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Complete problem input. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    tasks: Vec<Task>,
    workers: Vec<Worker>,
}

impl Instance {
    pub fn new(tasks: Vec<Task>, workers: Vec<Worker>) -> Result<Self> {
        if workers.is_empty() {
            return Err(SchedError::InvalidInstance("at least one worker required".into()));
        }
        for (i, t) in tasks.iter().enumerate() {
            if !(t.rst > 0.0 && t.rst.is_finite()) {
                return Err(SchedError::InvalidInstance(format!(
                    "task {} has non-positive rst {}",
                    i + 1,
                    t.rst
                )));
            }
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(SchedError::InvalidInstance(format!(
                    "task {} has non-positive weight {}",
                    i + 1,
                    t.weight
                )));
            }
        }
        for (j, w) in workers.iter().enumerate() {
            if !(w.rate > 0.0 && w.rate.is_finite()) {
                return Err(SchedError::InvalidInstance(format!(
                    "worker {} has non-positive rate {}",
                    j + 1,
                    w.rate
                )));
            }
            if !(w.contact >= 0.0 && w.contact.is_finite()) {
                return Err(SchedError::InvalidInstance(format!(
                    "worker {} has invalid contact time {}",
                    j + 1,
                    w.contact
                )));
            }
        }
        Ok(Self { tasks, workers })
    }

    /// Convenience constructor from `(τ, w)` pairs and rates.
    pub fn from_rates(tasks: &[(f64, f64)], rates: &[f64]) -> Result<Self> {
        Self::new(
            tasks.iter().map(|&(r, w)| Task::new(r, w)).collect(),
            rates.iter().map(|&l| Worker::from_rate(l)).collect(),
        )
    }

    /// Convenience constructor from `(τ, w)` pairs and explicit contact times
    /// (rates are set to `2/e`).
    pub fn from_contacts(tasks: &[(f64, f64)], contacts: &[f64]) -> Result<Self> {
        Self::new(
            tasks.iter().map(|&(r, w)| Task::new(r, w)).collect(),
            contacts.iter().map(|&e| Worker::with_contact(2.0 / e, e)).collect(),
        )
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn n(&self) -> usize {
        self.tasks.len()
    }

    pub fn m(&self) -> usize {
        self.workers.len()
    }

    pub fn contacts(&self) -> Vec<f64> {
        self.workers.iter().map(|w| w.contact).collect()
    }

    /// Same tasks and rates with every contact time replaced.
    pub fn with_contacts(&self, contacts: &[f64]) -> Result<Self> {
        if contacts.len() != self.m() {
            return Err(SchedError::InvalidInstance(format!(
                "expected {} contact times, got {}",
                self.m(),
                contacts.len()
            )));
        }
        let workers = self
            .workers
            .iter()
            .zip(contacts)
            .map(|(w, &e)| Worker::with_contact(w.rate, e))
            .collect();
        Self::new(self.tasks.clone(), workers)
    }

    /// Sub-instance restricted to the given tasks and workers, in the given order.
    pub fn restrict(&self, task_ids: &[usize], worker_ids: &[usize]) -> Result<Self> {
        Self::new(
            task_ids.iter().map(|&i| self.tasks[i]).collect(),
            worker_ids.iter().map(|&j| self.workers[j]).collect(),
        )
    }

    pub fn total_rst(&self) -> f64 {
        self.tasks.iter().map(|t| t.rst).sum()
    }

    pub fn tau_max(&self) -> f64 {
        fold(self.tasks.iter().map(|t| t.rst), f64::max)
    }

    pub fn tau_min(&self) -> f64 {
        fold(self.tasks.iter().map(|t| t.rst), f64::min)
    }

    pub fn w_max(&self) -> f64 {
        fold(self.tasks.iter().map(|t| t.weight), f64::max)
    }

    pub fn w_min(&self) -> f64 {
        fold(self.tasks.iter().map(|t| t.weight), f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        fold(self.workers.iter().map(|w| w.rate), f64::max)
    }

    pub fn lambda_min(&self) -> f64 {
        fold(self.workers.iter().map(|w| w.rate), f64::min)
    }

    pub fn e_min(&self) -> f64 {
        fold(self.workers.iter().map(|w| w.contact), f64::min)
    }

    pub fn to_json(&self) -> InstanceFile {
        InstanceFile {
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskRecord {
                    rst: t.rst,
                    weight: t.weight,
                })
                .collect(),
            workers: self
                .workers
                .iter()
                .map(|w| WorkerRecord {
                    lambda: w.rate,
                    contact: if w.contact == 2.0 / w.rate {
                        None
                    } else {
                        Some(w.contact)
                    },
                })
                .collect(),
        }
    }

    pub fn from_json(file: &InstanceFile) -> Result<Self> {
        let tasks = file.tasks.iter().map(|t| Task::new(t.rst, t.weight)).collect();
        let workers = file
            .workers
            .iter()
            .map(|w| match w.contact {
                Some(e) => Worker::with_contact(w.lambda, e),
                None => Worker::from_rate(w.lambda),
            })
            .collect();
        Self::new(tasks, workers)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: InstanceFile = serde_json::from_str(&text)?;
        Self::from_json(&file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

fn fold(it: impl Iterator<Item = f64>, f: fn(f64, f64) -> f64) -> f64 {
    it.reduce(f).unwrap_or(f64::NAN)
}

/// On-disk instance format shared by every CLI subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub tasks: Vec<TaskRecord>,
    pub workers: Vec<WorkerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub rst: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<f64>,
}

/// Per-worker ordered task lists. The list order is the processing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    assignment: Vec<Vec<usize>>,
    placement_key: Option<Vec<f64>>,
}

impl Schedule {
    /// Builds a schedule, checking that the lists partition `0..n`.
    pub fn new(assignment: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for list in &assignment {
            for &i in list {
                if i >= n {
                    return Err(SchedError::InvalidSchedule(format!("unknown task id {}", i + 1)));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(SchedError::InvalidSchedule(format!(
                        "task {} scheduled more than once",
                        i + 1
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(SchedError::InvalidSchedule(format!("task {} not scheduled", i + 1)));
        }
        Ok(Self {
            assignment,
            placement_key: None,
        })
    }

    pub fn with_placement_key(mut self, key: Vec<f64>) -> Self {
        self.placement_key = Some(key);
        self
    }

    pub fn assignment(&self) -> &[Vec<usize>] {
        &self.assignment
    }

    pub fn placement_key(&self) -> Option<&[f64]> {
        self.placement_key.as_deref()
    }

    pub fn num_workers(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.assignment.iter().map(Vec::len).sum()
    }

    /// Worker index of each task.
    pub fn worker_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_tasks()];
        for (j, list) in self.assignment.iter().enumerate() {
            for &i in list {
                out[i] = j;
            }
        }
        out
    }

    /// 1-based JSON view.
    pub fn to_json(&self) -> ScheduleFile {
        ScheduleFile {
            workers: self
                .assignment
                .iter()
                .enumerate()
                .map(|(j, list)| WorkerSchedule {
                    worker: j + 1,
                    tasks: list.iter().map(|i| i + 1).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub workers: Vec<WorkerSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSchedule {
    pub worker: usize,
    pub tasks: Vec<usize>,
}

/// Ids sorted by `w/τ` non-increasing, ties by ascending id.
pub fn smith_order(tasks: &[Task]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..tasks.len()).collect();
    ids.sort_by(|&a, &b| smith_cmp(&tasks[a], &tasks[b]));
    ids
}

pub(crate) fn smith_cmp(a: &Task, b: &Task) -> Ordering {
    b.ratio().total_cmp(&a.ratio())
}

fn check_shape(instance: &Instance, schedule: &Schedule) -> Result<()> {
    if schedule.num_workers() != instance.m() {
        return Err(SchedError::InvalidSchedule(format!(
            "schedule has {} workers, instance has {}",
            schedule.num_workers(),
            instance.m()
        )));
    }
    if let Some(i) = schedule.assignment.iter().flatten().find(|&&i| i >= instance.n()) {
        return Err(SchedError::InvalidSchedule(format!("unknown task id {}", i + 1)));
    }
    if schedule.num_tasks() != instance.n() {
        return Err(SchedError::InvalidSchedule(format!(
            "schedule covers {} tasks, instance has {}",
            schedule.num_tasks(),
            instance.n()
        )));
    }
    Ok(())
}

/// `C_i = e_j + Σ τ` over the prefix of `S_j` ending at task `i`.
pub fn completion_times(instance: &Instance, schedule: &Schedule) -> Result<Vec<f64>> {
    check_shape(instance, schedule)?;
    let mut c = vec![0.0; instance.n()];
    for (j, list) in schedule.assignment.iter().enumerate() {
        let mut t = instance.workers[j].contact;
        for &i in list {
            t += instance.tasks[i].rst;
            c[i] = t;
        }
    }
    Ok(c)
}

/// Total weighted completion time `Σ w_i C_i`.
pub fn weighted_completion(instance: &Instance, schedule: &Schedule) -> Result<f64> {
    let c = completion_times(instance, schedule)?;
    Ok(instance.tasks.iter().zip(&c).map(|(t, c)| t.weight * c).sum())
}

/// Expected workload of every worker: `e_j` plus the RST assigned to it.
pub fn expected_workloads(instance: &Instance, schedule: &Schedule) -> Vec<f64> {
    schedule
        .assignment
        .iter()
        .zip(&instance.workers)
        .map(|(list, w)| w.contact + list.iter().map(|&i| instance.tasks[i].rst).sum::<f64>())
        .collect()
}
