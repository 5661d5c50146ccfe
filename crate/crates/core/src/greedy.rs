//! Largest-Ratio-First list scheduling.
//!
//! Tasks are taken in Smith order and each one is appended to the worker with
//! the smallest expected workload `EW_j = e_j + Σ τ` (assigned so far).

use serde::{Deserialize, Serialize};

use crate::model::{smith_order, Instance, Schedule};
use crate::TOL;

/// How to pick among workers whose expected workloads tie (within [`TOL`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieRule {
    #[default]
    SmallestWorkerIndex,
    LargestWorkerIndex,
    /// Largest contact time `e_j`, then smallest index.
    LargestContact,
}

/// Running expected workload per worker.
#[derive(Debug, Clone)]
pub struct EwTracker {
    ew: Vec<f64>,
    contact: Vec<f64>,
}

impl EwTracker {
    /// Seeds every worker with its contact time.
    pub fn new(instance: &Instance) -> Self {
        let contact = instance.contacts();
        Self {
            ew: contact.clone(),
            contact,
        }
    }

    /// Explicit seeds; `contact` is only consulted by [`TieRule::LargestContact`].
    pub fn with_seeds(seeds: Vec<f64>, contact: Vec<f64>) -> Self {
        debug_assert_eq!(seeds.len(), contact.len());
        Self { ew: seeds, contact }
    }

    pub fn workloads(&self) -> &[f64] {
        &self.ew
    }

    /// Worker with minimum workload among `eligible`.
    pub fn argmin_among(&self, eligible: impl Iterator<Item = usize> + Clone, tie: TieRule) -> usize {
        let min = eligible
            .clone()
            .map(|j| self.ew[j])
            .fold(f64::INFINITY, f64::min);
        let tied = eligible.filter(|&j| self.ew[j] <= min + TOL);
        match tie {
            TieRule::SmallestWorkerIndex => tied.min(),
            TieRule::LargestWorkerIndex => tied.max(),
            TieRule::LargestContact => tied.reduce(|a, b| {
                if self.contact[b] > self.contact[a] || (self.contact[b] == self.contact[a] && b < a) {
                    b
                } else {
                    a
                }
            }),
        }
        .expect("no eligible worker")
    }

    pub fn argmin(&self, tie: TieRule) -> usize {
        self.argmin_among(0..self.ew.len(), tie)
    }

    pub fn add(&mut self, worker: usize, rst: f64) {
        self.ew[worker] += rst;
    }
}

/// List-schedules `order` onto the workers of `tracker`, returning per-worker lists
/// in assignment order.
pub fn list_schedule(instance: &Instance, order: &[usize], tracker: &mut EwTracker, tie: TieRule) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); tracker.ew.len()];
    for &i in order {
        let j = tracker.argmin(tie);
        lists[j].push(i);
        tracker.add(j, instance.tasks()[i].rst);
    }
    lists
}

/// Largest-Ratio-First schedule.
pub fn lrf_schedule(instance: &Instance, tie: TieRule) -> Schedule {
    let order = smith_order(instance.tasks());
    let mut tracker = EwTracker::new(instance);
    let lists = list_schedule(instance, &order, &mut tracker, tie);
    Schedule::new(lists, instance.n()).expect("list scheduling yields a partition")
}
