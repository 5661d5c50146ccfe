//! Parameter sweeps over synthetic and trace-derived instances.
//!
//! Every instance seed is derived from the seed base, the sweep-point index and
//! the instance index alone, and aggregation is order-independent, so a sweep
//! is reproducible bit-for-bit from its configuration.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{estimate_lambdas, gen_synthetic, gen_tasks, ContactLog, GapBaseline, SyntheticConfig};
use crate::error::{Result, SchedError};
use crate::greedy::{lrf_schedule, TieRule};
use crate::lp::relax;
use crate::model::{weighted_completion, Instance, Worker};
use crate::oracle::brute_optimum;
use crate::rounding::{dis_schedule, mdis_schedule, ris_round};
use crate::stats::{mean, paired_greater, stderr};
use crate::Algorithm;

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    P,
    Ratio,
    Workers,
    RstMean,
    RstStd,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::P => "p",
            SweepParam::Ratio => "ratio",
            SweepParam::Workers => "workers",
            SweepParam::RstMean => "rst-mean",
            SweepParam::RstStd => "rst-std",
        }
    }

    /// Default value grid.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::P => vec![0.2, 0.4, 0.6, 0.8, 1.0],
            SweepParam::Ratio => (1..=10).map(f64::from).collect(),
            SweepParam::Workers => vec![5.0, 10.0, 15.0, 20.0, 25.0],
            SweepParam::RstMean => vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0],
            SweepParam::RstStd => (0..10).map(|k| 20.0 + 2.0 * f64::from(k)).collect(),
        }
    }

    /// Config for one sweep point. Only the `p` sweep draws mixed weights;
    /// every other sweep keeps `w = τ`.
    pub fn apply(self, base: &SyntheticConfig, value: f64) -> Result<SyntheticConfig> {
        let mut cfg = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(SchedError::Domain(format!("{} value {v} must be a positive integer", self.name())))
            }
        };
        match self {
            SweepParam::P => cfg.p = value,
            SweepParam::Ratio => cfg.ratio_nm = count(value)?,
            SweepParam::Workers => cfg.m = count(value)?,
            SweepParam::RstMean => cfg.rst_mean = value,
            SweepParam::RstStd => cfg.rst_std = value,
        }
        if self != SweepParam::P {
            cfg.p = 1.0;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParam::P,
            SweepParam::Ratio,
            SweepParam::Workers,
            SweepParam::RstMean,
            SweepParam::RstStd,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| SchedError::Input(format!("unknown sweep parameter '{s}'")))
    }
}

/// Denominator of the reported ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    #[default]
    Lp,
    Brute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub instances: usize,
    pub algorithms: Vec<Algorithm>,
    pub eta: f64,
    pub seed_base: u64,
    pub denominator: Denominator,
    /// Values of the parameters not being swept.
    pub base: SyntheticConfig,
}

impl SweepConfig {
    /// Default grid, 100 instances, LRF/MDIS/RIS, `η = 0.5`.
    pub fn new(param: SweepParam) -> Self {
        Self {
            param,
            values: param.default_values(),
            instances: 100,
            algorithms: vec![Algorithm::Lrf, Algorithm::Mdis, Algorithm::Ris],
            eta: 0.5,
            seed_base: 0,
            denominator: Denominator::Lp,
            base: SyntheticConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(SchedError::Domain("instances per point must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(SchedError::Domain("sweep value list is empty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(SchedError::Domain("no algorithms selected".into()));
        }
        if let Some(a) = self.algorithms.iter().find(|a| a.is_online()) {
            return Err(SchedError::Domain(format!("{a} is online and needs meeting traces; not supported in sweeps")));
        }
        if !(self.eta > 0.0) {
            return Err(SchedError::Domain(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    /// FNV-1a hash of the JSON form of the config.
    pub fn hash(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of instance `idx` at sweep point `point`.
pub fn instance_seed(seed_base: u64, point: usize, idx: usize) -> u64 {
    splitmix64(seed_base ^ splitmix64(((point as u64) << 32) | idx as u64))
}

/// Aggregate for one (sweep value, algorithm) pair.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub algorithm: Algorithm,
    pub mean_ratio: f64,
    pub stderr: f64,
    pub mean_wct: f64,
    pub mean_lp: f64,
    /// Mean wall-clock time of the algorithm call; reported, never compared.
    pub mean_runtime_ms: f64,
    /// Instances dropped because the LP or the algorithm failed.
    pub failures: usize,
    /// Per-instance ratios in instance order, for paired comparisons.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub seed_base: u64,
    pub eta: f64,
    pub config_hash: u64,
    /// Hard invariant failures, e.g. a ratio below 1 against a lower bound.
    pub violations: Vec<String>,
}

pub const CSV_HEADER: &str = "param,value,algorithm,mean_ratio,stderr,mean_wct,mean_lp,seed_base";

impl SweepResult {
    pub fn row(&self, value: f64, algorithm: Algorithm) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.algorithm == algorithm)
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.9},{:.9},{:.6},{:.6},{}",
                r.param, r.value, r.algorithm, r.mean_ratio, r.stderr, r.mean_wct, r.mean_lp, self.seed_base
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    /// `max − min` of the algorithms' mean ratios at one sweep value.
    pub fn spread(&self, value: f64) -> f64 {
        let ratios: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.value == value)
            .map(|r| r.mean_ratio)
            .collect();
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Result of running every algorithm on one instance.
#[derive(Debug, Clone)]
struct InstanceRun {
    lp: f64,
    denom: f64,
    /// `(wct, runtime_ms)` per configured algorithm, `None` on failure.
    results: Vec<Option<(f64, f64)>>,
}

fn run_algorithm(alg: Algorithm, inst: &Instance, sol: &crate::lp::LpSolution, seed: u64) -> Result<f64> {
    let s = match alg {
        Algorithm::Lrf => lrf_schedule(inst, TieRule::SmallestWorkerIndex),
        Algorithm::Mdis => mdis_schedule(inst, sol)?,
        Algorithm::Ris => ris_round(inst, sol, splitmix64(seed ^ 0x5249_5300))?,
        Algorithm::Dis => dis_schedule(inst, sol)?,
        Algorithm::Cosmos | Algorithm::Odis => {
            return Err(SchedError::Input(format!("{alg} is not an offline algorithm")))
        }
    };
    weighted_completion(inst, &s)
}

fn run_instance(inst: &Instance, algorithms: &[Algorithm], eta: f64, denominator: Denominator, seed: u64) -> Option<InstanceRun> {
    let sol = match relax(inst, eta) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("LP failed on instance seed {seed}: {e}");
            return None;
        }
    };
    let denom = match denominator {
        Denominator::Lp => sol.objective,
        Denominator::Brute => match brute_optimum(inst) {
            Ok((_, v)) => v,
            Err(e) => {
                log::warn!("brute force failed on instance seed {seed}: {e}");
                return None;
            }
        },
    };
    let results = algorithms
        .iter()
        .map(|&alg| {
            let start = Instant::now();
            match run_algorithm(alg, inst, &sol, seed) {
                Ok(w) => Some((w, start.elapsed().as_secs_f64() * 1e3)),
                Err(e) => {
                    log::warn!("{alg} failed on instance seed {seed}: {e}");
                    None
                }
            }
        })
        .collect();
    Some(InstanceRun {
        lp: sol.objective,
        denom,
        results,
    })
}

fn aggregate(
    param: &str,
    value: f64,
    algorithms: &[Algorithm],
    runs: &[Option<InstanceRun>],
    denominator: Denominator,
    violations: &mut Vec<String>,
) -> Vec<SweepRow> {
    let floor = match denominator {
        Denominator::Brute => 1.0 - 1e-9,
        Denominator::Lp => 1.0 - 1e-6,
    };
    algorithms
        .iter()
        .enumerate()
        .map(|(a, &alg)| {
            let mut ratios = Vec::new();
            let mut wcts = Vec::new();
            let mut lps = Vec::new();
            let mut times = Vec::new();
            let mut failures = 0;
            for run in runs {
                match run.as_ref().and_then(|r| r.results[a].map(|x| (r, x))) {
                    Some((r, (wct, ms))) => {
                        let ratio = wct / r.denom;
                        if ratio < floor {
                            violations.push(format!("{param}={value} {alg}: ratio {ratio} below {floor}"));
                        }
                        ratios.push(ratio);
                        wcts.push(wct);
                        lps.push(r.lp);
                        times.push(ms);
                    }
                    None => failures += 1,
                }
            }
            SweepRow {
                param: param.to_string(),
                value,
                algorithm: alg,
                mean_ratio: mean(&ratios),
                stderr: stderr(&ratios),
                mean_wct: mean(&wcts),
                mean_lp: mean(&lps),
                mean_runtime_ms: mean(&times),
                failures,
                ratios,
            }
        })
        .collect()
}

/// Logs, without failing, sweep points where RIS does not come out worst.
fn check_ris_worst(rows: &[SweepRow]) {
    for ris in rows.iter().filter(|r| r.algorithm == Algorithm::Ris) {
        for other in rows
            .iter()
            .filter(|r| r.value == ris.value && matches!(r.algorithm, Algorithm::Mdis | Algorithm::Dis))
        {
            if ris.ratios.len() == other.ratios.len() && ris.ratios.len() > 1 {
                let (_, lo) = paired_greater(&ris.ratios, &other.ratios);
                if lo <= 0.0 {
                    log::warn!(
                        "{}={}: RIS mean ratio {:.4} not significantly above {} ({:.4})",
                        ris.param,
                        ris.value,
                        ris.mean_ratio,
                        other.algorithm,
                        other.mean_ratio
                    );
                }
            }
        }
    }
}

/// Runs a synthetic sweep. Instances at each point run in parallel.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (point, &value) in cfg.values.iter().enumerate() {
        let point_cfg = cfg.param.apply(&cfg.base, value)?;
        let runs: Vec<Option<InstanceRun>> = (0..cfg.instances)
            .into_par_iter()
            .map(|idx| {
                let seed = instance_seed(cfg.seed_base, point, idx);
                let inst = gen_synthetic(&SyntheticConfig { seed, ..point_cfg.clone() }).ok()?;
                run_instance(&inst, &cfg.algorithms, cfg.eta, cfg.denominator, seed)
            })
            .collect();
        rows.extend(aggregate(cfg.param.name(), value, &cfg.algorithms, &runs, cfg.denominator, &mut violations));
    }
    check_ris_worst(&rows);
    for v in &violations {
        log::error!("{v}");
    }
    Ok(SweepResult {
        rows,
        seed_base: cfg.seed_base,
        eta: cfg.eta,
        config_hash: cfg.hash(),
        violations,
    })
}

/// Sweep over task-to-worker ratios with workers estimated from contact traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSweepConfig {
    pub ratios: Vec<usize>,
    pub top_k: usize,
    pub instances: usize,
    pub algorithms: Vec<Algorithm>,
    pub eta: f64,
    pub seed_base: u64,
    pub baseline: GapBaseline,
    /// Task distribution; worker fields are ignored.
    pub tasks: SyntheticConfig,
}

impl Default for TraceSweepConfig {
    fn default() -> Self {
        Self {
            ratios: vec![2, 4, 6, 8, 10],
            top_k: 128,
            instances: 100,
            algorithms: vec![Algorithm::Lrf, Algorithm::Mdis, Algorithm::Ris],
            eta: 0.5,
            seed_base: 0,
            baseline: GapBaseline::TraceStart,
            tasks: SyntheticConfig::default(),
        }
    }
}

/// One requester in one trace.
#[derive(Debug, Clone, Copy)]
pub struct Requester<'a> {
    pub log: &'a ContactLog,
    pub id: u64,
}

/// Per requester, estimates the top-`k` workers, runs every ratio and
/// averages the per-requester mean ratios. Requesters with fewer than two
/// workers are skipped.
pub fn run_trace_sweep(cfg: &TraceSweepConfig, requesters: &[Requester]) -> Result<SweepResult> {
    let sweep_like = SweepConfig {
        param: SweepParam::Ratio,
        values: cfg.ratios.iter().map(|&r| r as f64).collect(),
        instances: cfg.instances,
        algorithms: cfg.algorithms.clone(),
        eta: cfg.eta,
        seed_base: cfg.seed_base,
        denominator: Denominator::Lp,
        base: cfg.tasks.clone(),
    };
    sweep_like.validate()?;
    let mut workers_per_req: Vec<(u64, Vec<Worker>)> = Vec::new();
    for r in requesters {
        let rates = estimate_lambdas(r.log, r.id, cfg.top_k, cfg.baseline)?;
        if rates.len() < 2 {
            log::warn!("requester {} has {} worker(s), skipped", r.id, rates.len());
            continue;
        }
        workers_per_req.push((r.id, rates.iter().map(|p| p.worker()).collect()));
    }
    if workers_per_req.is_empty() {
        return Err(SchedError::Domain("no requester has at least two workers".into()));
    }

    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (point, &ratio) in cfg.ratios.iter().enumerate() {
        let mut per_req: Vec<Vec<SweepRow>> = Vec::new();
        for (id, workers) in &workers_per_req {
            let n = ratio * workers.len();
            let runs: Vec<Option<InstanceRun>> = (0..cfg.instances)
                .into_par_iter()
                .map(|idx| {
                    let seed = instance_seed(cfg.seed_base ^ splitmix64(*id), point, idx);
                    let tasks = gen_tasks(&cfg.tasks, n, seed);
                    let rates: Vec<f64> = workers.iter().map(|w| w.rate).collect();
                    let inst = Instance::from_rates(&tasks, &rates).ok()?;
                    run_instance(&inst, &cfg.algorithms, cfg.eta, Denominator::Lp, seed)
                })
                .collect();
            per_req.push(aggregate("ratio", ratio as f64, &cfg.algorithms, &runs, Denominator::Lp, &mut violations));
        }
        for a in 0..cfg.algorithms.len() {
            let means: Vec<f64> = per_req.iter().map(|rows| rows[a].mean_ratio).collect();
            let mut row = per_req[0][a].clone();
            row.mean_ratio = mean(&means);
            row.stderr = stderr(&means);
            row.mean_wct = mean(&per_req.iter().map(|rows| rows[a].mean_wct).collect::<Vec<_>>());
            row.mean_lp = mean(&per_req.iter().map(|rows| rows[a].mean_lp).collect::<Vec<_>>());
            row.mean_runtime_ms = mean(&per_req.iter().map(|rows| rows[a].mean_runtime_ms).collect::<Vec<_>>());
            row.failures = per_req.iter().map(|rows| rows[a].failures).sum();
            row.ratios = means;
            rows.push(row);
        }
    }
    Ok(SweepResult {
        rows,
        seed_base: cfg.seed_base,
        eta: cfg.eta,
        config_hash: fnv1a(serde_json::to_string(cfg).expect("config serializes").as_bytes()),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_trace;

    fn tiny(param: SweepParam, values: Vec<f64>) -> SweepConfig {
        SweepConfig {
            values,
            instances: 2,
            base: SyntheticConfig { m: 2, ratio_nm: 2, ..Default::default() },
            ..SweepConfig::new(param)
        }
    }

    #[test]
    fn csv_shape_and_determinism() {
        let cfg = tiny(SweepParam::P, vec![0.5, 1.0]);
        let a = run_sweep(&cfg).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert!(a.violations.is_empty(), "{:?}", a.violations);
        let csv = a.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 7);
        assert_eq!(run_sweep(&cfg).unwrap().to_csv(), csv);
        assert_eq!(a.config_hash, cfg.hash());
    }

    #[test]
    fn brute_denominator_ratios_at_least_one() {
        let mut cfg = tiny(SweepParam::Ratio, vec![2.0]);
        cfg.denominator = Denominator::Brute;
        cfg.algorithms = vec![Algorithm::Lrf, Algorithm::Mdis, Algorithm::Dis];
        let r = run_sweep(&cfg).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.rows.iter().all(|row| row.ratios.iter().all(|&x| x >= 1.0 - 1e-9)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny(SweepParam::P, vec![1.0]);
        cfg.instances = 0;
        assert!(run_sweep(&cfg).is_err());
        let mut cfg = tiny(SweepParam::Ratio, vec![1.5]);
        assert!(run_sweep(&cfg).is_err());
        cfg.values = vec![];
        assert!(run_sweep(&cfg).is_err());
        let mut cfg = tiny(SweepParam::P, vec![1.0]);
        cfg.algorithms = vec![Algorithm::Cosmos];
        assert!(run_sweep(&cfg).is_err());
    }

    #[test]
    fn non_p_sweeps_force_proportional_weights() {
        let base = SyntheticConfig { p: 0.3, ..Default::default() };
        assert_eq!(SweepParam::RstMean.apply(&base, 20.0).unwrap().p, 1.0);
        assert_eq!(SweepParam::P.apply(&base, 0.4).unwrap().p, 0.4);
    }

    fn trace_cfg() -> TraceSweepConfig {
        TraceSweepConfig {
            ratios: vec![2],
            top_k: 3,
            instances: 2,
            tasks: SyntheticConfig { rst_mean: 5.0, rst_std: 2.0, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn trace_sweep_averages_requesters() {
        let log = synthetic_trace(
            &[(1, 10, 0.5), (1, 11, 0.2), (2, 10, 1.0), (2, 12, 0.3), (3, 11, 0.1), (3, 12, 0.4), (4, 10, 0.3)],
            30,
            9,
        )
        .unwrap();
        let cfg = trace_cfg();
        let reqs: Vec<Requester> = [1, 2, 3].iter().map(|&id| Requester { log: &log, id }).collect();
        let all = run_trace_sweep(&cfg, &reqs).unwrap();
        let singles: Vec<SweepResult> = reqs
            .iter()
            .map(|r| run_trace_sweep(&cfg, std::slice::from_ref(r)).unwrap())
            .collect();
        for (a, row) in all.rows.iter().enumerate() {
            let want = mean(&singles.iter().map(|s| s.rows[a].mean_ratio).collect::<Vec<_>>());
            assert!((row.mean_ratio - want).abs() < 1e-12);
        }
        // Requester 4 has a single peer.
        let with_short = [reqs[0], Requester { log: &log, id: 4 }];
        let r = run_trace_sweep(&cfg, &with_short).unwrap();
        assert_eq!(r.rows[0].mean_ratio, singles[0].rows[0].mean_ratio);
    }
}
