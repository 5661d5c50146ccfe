//! Synthetic instances and contact-trace ingestion.
//!
//! Trace files hold one contact per line, `device_a device_b start end`,
//! whitespace separated. Lines starting with `#` are comments, except the
//! optional headers `# trace-start: <t>` and `# trace-end: <t>`. Raw
//! co-location logs convert with a one-liner, e.g.
//! `awk '{print $1, $2, $3, $4}' contacts.dat > trace.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::model::{Instance, Task, Worker};

/// Parameters of the synthetic instance family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub m: usize,
    /// Tasks per worker; `n = m · ratio_nm`.
    pub ratio_nm: usize,
    pub lambda_range: (f64, f64),
    pub rst_mean: f64,
    /// Standard deviation of the service-time Gaussian.
    pub rst_std: f64,
    /// Probability that a task's weight equals its service time.
    pub p: f64,
    /// Weight range otherwise.
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            m: 10,
            ratio_nm: 5,
            lambda_range: (1.0, 30.0),
            rst_mean: 30.0,
            rst_std: 30.0,
            p: 1.0,
            weight_range: (1.0, 10.0),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn n(&self) -> usize {
        self.m * self.ratio_nm
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lambda_range;
        let (wlo, whi) = self.weight_range;
        let bad = |msg: String| Err(SchedError::Domain(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("lambda range [{lo}, {hi}] must satisfy 0 < lo ≤ hi"));
        }
        if !(self.rst_mean > 0.0) || !(self.rst_std >= 0.0) {
            return bad(format!("rst mean {} must be > 0, std {} ≥ 0", self.rst_mean, self.rst_std));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p = {} outside [0, 1]", self.p));
        }
        if !(wlo > 0.0 && wlo <= whi && whi.is_finite()) {
            return bad(format!("weight range [{wlo}, {whi}] must satisfy 0 < lo ≤ hi"));
        }
        Ok(())
    }
}

/// Positive service time by rejection from `N(mean, std²)`.
pub fn sample_rst(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    let normal = Normal::new(mean, std).expect("validated parameters");
    loop {
        let v = normal.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
}

/// Draws a synthetic instance; identical configs give identical instances.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rates = Uniform::new_inclusive(cfg.lambda_range.0, cfg.lambda_range.1);
    let weights = Uniform::new_inclusive(cfg.weight_range.0, cfg.weight_range.1);
    let workers: Vec<Worker> = (0..cfg.m).map(|_| Worker::from_rate(rates.sample(&mut rng))).collect();
    let tasks: Vec<Task> = (0..cfg.n())
        .map(|_| {
            let rst = sample_rst(&mut rng, cfg.rst_mean, cfg.rst_std);
            let weight = if rng.gen_bool(cfg.p) { rst } else { weights.sample(&mut rng) };
            Task::new(rst, weight)
        })
        .collect();
    Instance::new(tasks, workers)
}

/// Tasks only, for pairing with workers estimated from a trace.
pub fn gen_tasks(cfg: &SyntheticConfig, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = Uniform::new_inclusive(cfg.weight_range.0, cfg.weight_range.1);
    (0..n)
        .map(|_| {
            let rst = sample_rst(&mut rng, cfg.rst_mean, cfg.rst_std);
            let weight = if rng.gen_bool(cfg.p) { rst } else { weights.sample(&mut rng) };
            (rst, weight)
        })
        .collect()
}

/// One contact between two devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub a: u64,
    pub b: u64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactLog {
    pub records: Vec<ContactRecord>,
    /// Reference time for the first inter-contact gap; 0 unless set by a header.
    pub trace_start: f64,
    pub trace_end: Option<f64>,
}

/// A rejected input line (1-based line number).
#[derive(Debug, Clone, PartialEq)]
pub struct Malformed {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub log: ContactLog,
    pub malformed: Vec<Malformed>,
}

fn parse_header(line: &str) -> Option<(&str, &str)> {
    let rest = line.trim_start_matches('#').trim();
    let (key, value) = rest.split_once(':')?;
    let key = key.trim();
    matches!(key, "trace-start" | "trace-end").then(|| (key, value.trim()))
}

/// Parses trace text. With `strict`, any malformed line is an error;
/// otherwise malformed lines are reported alongside the log.
pub fn parse_trace_str(text: &str, strict: bool) -> Result<ParsedTrace> {
    let mut log = ContactLog::default();
    let mut malformed = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some((key, value)) = parse_header(line) {
                match value.parse::<f64>() {
                    Ok(v) if v >= 0.0 && v.is_finite() => {
                        if key == "trace-start" {
                            log.trace_start = v;
                        } else {
                            log.trace_end = Some(v);
                        }
                    }
                    _ => malformed.push(Malformed {
                        line: idx + 1,
                        reason: format!("bad {key} value '{value}'"),
                    }),
                }
            }
            continue;
        }
        match parse_record(line) {
            Ok(r) => log.records.push(r),
            Err(reason) => malformed.push(Malformed { line: idx + 1, reason }),
        }
    }
    if strict && !malformed.is_empty() {
        let first = &malformed[0];
        return Err(SchedError::Parse(format!(
            "{} malformed line(s); line {}: {}",
            malformed.len(),
            first.line,
            first.reason
        )));
    }
    Ok(ParsedTrace { log, malformed })
}

fn parse_record(line: &str) -> std::result::Result<ContactRecord, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let id = |s: &str| s.parse::<u64>().map_err(|_| format!("bad device id '{s}'"));
    let time = |s: &str| match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("bad time '{s}'")),
    };
    let r = ContactRecord {
        a: id(fields[0])?,
        b: id(fields[1])?,
        start: time(fields[2])?,
        end: time(fields[3])?,
    };
    if r.end < r.start {
        return Err(format!("end {} before start {}", r.end, r.start));
    }
    Ok(r)
}

pub fn parse_trace(path: impl AsRef<Path>, strict: bool) -> Result<ParsedTrace> {
    parse_trace_str(&std::fs::read_to_string(path)?, strict)
}

/// Serializes a log in the format read by [`parse_trace_str`].
pub fn write_trace(log: &ContactLog) -> String {
    let mut out = String::new();
    if log.trace_start != 0.0 {
        let _ = writeln!(out, "# trace-start: {}", log.trace_start);
    }
    if let Some(end) = log.trace_end {
        let _ = writeln!(out, "# trace-end: {end}");
    }
    for r in &log.records {
        let _ = writeln!(out, "{} {} {} {}", r.a, r.b, r.start, r.end);
    }
    out
}

/// Reference point for the first inter-contact gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GapBaseline {
    /// `l_j` gaps, the first measured from the trace start.
    #[default]
    TraceStart,
    /// `l_j − 1` gaps between consecutive contacts.
    FirstContact,
}

/// Estimated meeting rate of one peer of the requester.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerRate {
    pub peer: u64,
    pub lambda: f64,
    pub contacts: usize,
}

impl PeerRate {
    pub fn worker(&self) -> Worker {
        Worker::from_rate(self.lambda)
    }
}

/// Rates `λ_j = (#gaps) / Σ gaps` from the starts of the requester's contacts
/// with each peer, highest `top_k` first (ties by peer id).
pub fn estimate_lambdas(log: &ContactLog, requester: u64, top_k: usize, baseline: GapBaseline) -> Result<Vec<PeerRate>> {
    let mut starts: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in &log.records {
        let peer = if r.a == requester {
            r.b
        } else if r.b == requester {
            r.a
        } else {
            continue;
        };
        if peer != requester {
            starts.entry(peer).or_default().push(r.start);
        }
    }
    if starts.is_empty() {
        return Err(SchedError::Domain(format!("requester {requester} has no contacts in the trace")));
    }
    let mut out = Vec::with_capacity(starts.len());
    for (peer, mut s) in starts {
        s.sort_by(f64::total_cmp);
        let last = *s.last().expect("nonempty");
        let (gaps, span) = match baseline {
            GapBaseline::TraceStart => (s.len(), last - log.trace_start),
            GapBaseline::FirstContact => (s.len() - 1, last - s[0]),
        };
        if gaps == 0 || !(span > 0.0) {
            log::warn!("peer {peer} of requester {requester}: total inter-contact time is zero, excluded");
            continue;
        }
        out.push(PeerRate {
            peer,
            lambda: gaps as f64 / span,
            contacts: s.len(),
        });
    }
    out.sort_by(|a, b| b.lambda.total_cmp(&a.lambda).then(a.peer.cmp(&b.peer)));
    out.truncate(top_k);
    Ok(out)
}

/// Devices appearing in the log, ascending.
pub fn devices(log: &ContactLog) -> Vec<u64> {
    let mut ids: Vec<u64> = log.records.iter().flat_map(|r| [r.a, r.b]).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Poisson contact streams: `count` contacts per `(a, b, λ)` triple, starting at time 0.
pub fn synthetic_trace(pairs: &[(u64, u64, f64)], count: usize, seed: u64) -> Result<ContactLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(pairs.len() * count);
    for &(a, b, rate) in pairs {
        let exp = Exp::new(rate).map_err(|e| SchedError::Domain(format!("rate {rate}: {e}")))?;
        let mut t = 0.0;
        for _ in 0..count {
            t += exp.sample(&mut rng);
            records.push(ContactRecord { a, b, start: t, end: t });
        }
    }
    records.sort_by(|x, y| x.start.total_cmp(&y.start));
    Ok(ContactLog {
        records,
        trace_start: 0.0,
        trace_end: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_shape_and_reproducibility() {
        let cfg = SyntheticConfig::default();
        let a = gen_synthetic(&cfg).unwrap();
        assert_eq!((a.n(), a.m()), (50, 10));
        assert!(a.tasks().iter().all(|t| t.weight == t.rst && t.rst > 0.0));
        assert!(a.workers().iter().all(|w| (1.0..=30.0).contains(&w.rate)));
        let b = gen_synthetic(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a.to_json()).unwrap(), serde_json::to_string(&b.to_json()).unwrap());
    }

    #[test]
    fn mixed_weights() {
        let cfg = SyntheticConfig { p: 0.0, ..Default::default() };
        let inst = gen_synthetic(&cfg).unwrap();
        assert!(inst.tasks().iter().all(|t| (1.0..=10.0).contains(&t.weight)));
    }

    #[test]
    fn truncated_gaussian_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..10_000).map(|_| sample_rst(&mut rng, 30.0, 30.0)).collect();
        assert!(draws.iter().all(|&v| v > 0.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // Truncation at zero lifts the mean to 30 + 30·φ(1)/Φ(1) ≈ 38.63.
        assert!((mean - 38.63).abs() < 1.0, "{mean}");
        let narrow: Vec<f64> = (0..10_000).map(|_| sample_rst(&mut rng, 30.0, 30f64.sqrt())).collect();
        let mean = narrow.iter().sum::<f64>() / narrow.len() as f64;
        assert!((mean - 30.0).abs() < 1.0, "{mean}");
    }

    #[test]
    fn invalid_config() {
        assert!(gen_synthetic(&SyntheticConfig { p: 1.5, ..Default::default() }).is_err());
        assert!(gen_synthetic(&SyntheticConfig { lambda_range: (0.0, 1.0), ..Default::default() }).is_err());
    }

    #[test]
    fn parse_and_round_trip() {
        let text = "# comment\n1 2 10 11\n2 1 30 30.5\n1 3 60 61\n";
        let parsed = parse_trace_str(text, true).unwrap();
        assert_eq!(parsed.log.records.len(), 3);
        let again = parse_trace_str(&write_trace(&parsed.log), true).unwrap();
        assert_eq!(again.log, parsed.log);

        let log = ContactLog {
            records: vec![ContactRecord { a: 4, b: 9, start: 0.1 + 0.2, end: 1.0 / 3.0 }],
            trace_start: 0.05,
            trace_end: Some(100.0),
        };
        assert_eq!(parse_trace_str(&write_trace(&log), true).unwrap().log, log);
    }

    #[test]
    fn malformed_lines() {
        let text = "1 2 10 5\n1 2 3\nx 2 1 2\n1 2 1 2\n";
        let parsed = parse_trace_str(text, false).unwrap();
        assert_eq!(parsed.log.records.len(), 1);
        assert_eq!(parsed.malformed.iter().map(|m| m.line).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(matches!(parse_trace_str(text, true), Err(SchedError::Parse(_))));
    }

    #[test]
    fn estimator_examples() {
        let log = parse_trace_str("0 1 10 11\n1 0 30 31\n0 1 60 61\n0 2 5 6\n", true).unwrap().log;
        let rates = estimate_lambdas(&log, 0, 10, GapBaseline::TraceStart).unwrap();
        assert_eq!(rates[0].peer, 2);
        assert!((rates[0].lambda - 0.2).abs() < 1e-12);
        assert!((rates[1].lambda - 0.05).abs() < 1e-12);
        assert_eq!(estimate_lambdas(&log, 0, 1, GapBaseline::TraceStart).unwrap().len(), 1);

        let alt = estimate_lambdas(&log, 0, 10, GapBaseline::FirstContact).unwrap();
        assert_eq!(alt.len(), 1);
        assert!((alt[0].lambda - 2.0 / 50.0).abs() < 1e-12);

        assert!(matches!(
            estimate_lambdas(&log, 7, 10, GapBaseline::TraceStart),
            Err(SchedError::Domain(_))
        ));
    }

    #[test]
    fn header_sets_trace_start() {
        let log = parse_trace_str("# trace-start: 4\n0 1 10 10\n", true).unwrap().log;
        assert_eq!(log.trace_start, 4.0);
        let r = estimate_lambdas(&log, 0, 1, GapBaseline::TraceStart).unwrap();
        assert!((r[0].lambda - 1.0 / 6.0).abs() < 1e-12);
    }
}
