//! # msn-sched
//!
//! Task scheduling for crowdsourcing over a mobile social network, with the
//! objective of minimizing total weighted completion time `Σ w_i C_i`.
//!
//! A requester holds `n` indivisible tasks (service time `τ_i`, weight `w_i`)
//! and distributes them to `m` crowd workers. Inter-meeting times between the
//! requester and worker `j` are exponential with rate `λ_j`, so every batch
//! pays an expected contact time `e_j = 2/λ_j` (one meeting to hand the batch
//! over, one to collect the results).
//!
//! Modules:
//!  - [`model`]: tasks, workers, instances, schedules and exact WCT evaluation
//!  - [`greedy`]: Largest-Ratio-First list scheduling on expected workloads
//!  - [`lp`]: interval-indexed LP relaxation and its simplex solver
//!  - [`rounding`]: randomized rounding, derandomized rounding and the
//!    `C̄`-ordered list heuristic built on the LP solution
//!  - [`online`]: meeting-triggered replanning (CosMOS, ODIS) and meeting simulation
//!  - [`data`]: synthetic instance generation and contact-trace rate estimation
//!  - [`oracle`]: brute-force optimum, bound auditing, the Eastman-bound counterexample
//!  - [`bench`]: parameter sweeps producing CSV summaries

pub mod bench;
pub mod data;
pub mod error;
pub mod greedy;
pub mod lp;
pub mod model;
pub mod online;
pub mod oracle;
pub mod rounding;
pub mod stats;

pub use error::{Result, SchedError};
pub use greedy::{lrf_schedule, TieRule};
pub use lp::{build_grid, build_lp, solve_lp, IntervalGrid, LpModel, LpSolution};
pub use model::{completion_times, smith_order, weighted_completion, Instance, Schedule, Task, Worker};

/// Absolute tolerance used for floating-point comparisons of times and WCT values.
pub const TOL: f64 = 1e-9;

/// Scheduling algorithms exposed by the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lrf,
    Cosmos,
    Ris,
    Dis,
    Mdis,
    Odis,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Lrf,
        Algorithm::Cosmos,
        Algorithm::Ris,
        Algorithm::Dis,
        Algorithm::Mdis,
        Algorithm::Odis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lrf => "lrf",
            Algorithm::Cosmos => "cosmos",
            Algorithm::Ris => "ris",
            Algorithm::Dis => "dis",
            Algorithm::Mdis => "mdis",
            Algorithm::Odis => "odis",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(self, Algorithm::Cosmos | Algorithm::Odis)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SchedError::Input(format!("unknown algorithm '{s}'")))
    }
}
