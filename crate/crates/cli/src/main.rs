use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msn_sched::bench::{run_sweep, run_trace_sweep, Denominator, Requester, SweepConfig, SweepParam, SweepResult, TraceSweepConfig};
use msn_sched::data::{estimate_lambdas, gen_synthetic, parse_trace, ContactLog, GapBaseline, SyntheticConfig};
use msn_sched::lp::relax;
use msn_sched::online::{cosmos_with, evaluate, odis, sample_meetings, CosmosOptions, EvalMode, OnlineStepLog};
use msn_sched::oracle::{audit_bounds, brute_optimum, dis_alpha, ris_alpha, verify_counterexample, BoundReport};
use msn_sched::rounding::{dis_schedule, mdis_schedule, ris_round};
use msn_sched::{build_grid, build_lp, lrf_schedule, weighted_completion, Algorithm, Instance, Schedule, TieRule};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "msn-sched", version, about = "Weighted-completion-time task scheduling over mobile social networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on an instance file.
    Run(RunArgs),
    /// Solve the interval-indexed LP relaxation.
    SolveLp(SolveLpArgs),
    /// Generate a synthetic instance.
    Gen(GenArgs),
    /// Estimate worker contact rates for one requester from a contact trace.
    ParseTrace(ParseTraceArgs),
    /// Check the Eastman-bound counterexample or the approximation guarantees on an instance.
    Verify(VerifyArgs),
    /// Run a parameter sweep and write a CSV summary.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Tie {
    Smallest,
    Largest,
    Contact,
}

impl From<Tie> for TieRule {
    fn from(t: Tie) -> Self {
        match t {
            Tie::Smallest => TieRule::SmallestWorkerIndex,
            Tie::Largest => TieRule::LargestWorkerIndex,
            Tie::Contact => TieRule::LargestContact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    TraceStart,
    FirstContact,
}

impl From<Baseline> for GapBaseline {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::TraceStart => GapBaseline::TraceStart,
            Baseline::FirstContact => GapBaseline::FirstContact,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DenominatorArg {
    Lp,
    Brute,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    alg: Algorithm,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "smallest")]
    tie: Tie,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent RIS draws (seeds `seed .. seed+trials`).
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Online evaluation: realized, expected or sampled.
    #[arg(long, default_value = "realized")]
    eval: EvalMode,
    /// Raise negative CosMOS initial workloads to zero.
    #[arg(long)]
    clamp: bool,
    /// Write the online per-step log as CSV.
    #[arg(long)]
    log_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SolveLpArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Write a plain-text listing of rows and columns.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Tasks per worker.
    #[arg(long, default_value_t = 5)]
    ratio: usize,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 30.0)]
    rst_mean: f64,
    #[arg(long, default_value_t = 30.0)]
    rst_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParseTraceArgs {
    #[arg(long)]
    file: PathBuf,
    #[arg(long)]
    requester: u64,
    #[arg(long, default_value_t = 128)]
    top_k: usize,
    /// Fail on any malformed line instead of skipping it.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "trace-start")]
    baseline: Baseline,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Evaluate the contact-adjusted Eastman bound on the four-task counterexample.
    #[arg(long, conflicts_with = "bounds")]
    theorem1: bool,
    /// `start:end:step` grid of the counterexample parameter.
    #[arg(long, default_value = "1:30:0.5")]
    t_range: String,
    /// Check every applicable approximation guarantee on an instance.
    #[arg(long, requires = "instance")]
    bounds: bool,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RIS draws averaged for its expectation bound.
    #[arg(long, default_value_t = 500)]
    trials: u64,
    /// Write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, conflicts_with = "trace")]
    sweep: Option<SweepParam>,
    /// Contact trace files; workers come from the listed requesters.
    #[arg(long, num_args = 1.., requires = "requesters")]
    trace: Vec<PathBuf>,
    /// Comma-separated requester device ids.
    #[arg(long, value_delimiter = ',')]
    requesters: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "lrf,mdis,ris")]
    algs: Vec<Algorithm>,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, value_enum, default_value = "lp")]
    denominator: DenominatorArg,
    /// Override the sweep grid (comma-separated).
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Workers per requester in trace sweeps.
    #[arg(long, default_value_t = 128)]
    top_k: usize,
    #[arg(long, value_enum, default_value = "trace-start")]
    baseline: Baseline,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::SolveLp(a) => cmd_solve_lp(a).map(|_| true),
        Command::Gen(a) => cmd_gen(a).map(|_| true),
        Command::ParseTrace(a) => cmd_parse_trace(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<Instance> {
    Instance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn print_json(v: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn schedule_json(sched: &Schedule) -> Value {
    json!(sched.to_json().workers)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    let wct = |s: &Schedule| weighted_completion(&inst, s);
    match a.alg {
        Algorithm::Lrf => {
            let s = lrf_schedule(&inst, a.tie.into());
            print_json(&json!({"algorithm": "lrf", "schedule": schedule_json(&s), "wct": wct(&s)?}))
        }
        Algorithm::Ris | Algorithm::Dis | Algorithm::Mdis => {
            let sol = relax(&inst, a.eta)?;
            // Rounding guarantees: RIS on the expectation, DIS on the schedule itself.
            let bounds = json!({"ris": ris_alpha(a.eta), "dis": dis_alpha(&inst, a.eta)});
            let mut out = json!({
                "algorithm": a.alg.name(),
                "eta": a.eta,
                "lp_objective": sol.objective,
                "bounds": bounds,
            });
            if a.alg == Algorithm::Ris {
                let trials = a.trials.max(1);
                let mut per_trial = Vec::with_capacity(trials as usize);
                let mut first = None;
                for k in 0..trials {
                    let s = ris_round(&inst, &sol, a.seed.wrapping_add(k))?;
                    per_trial.push(wct(&s)?);
                    first.get_or_insert(s);
                }
                let mean = per_trial.iter().sum::<f64>() / per_trial.len() as f64;
                out["schedule"] = schedule_json(first.as_ref().expect("at least one trial"));
                out["wct"] = json!(per_trial[0]);
                out["trial_wct"] = json!(per_trial);
                out["mean_wct"] = json!(mean);
            } else {
                let s = if a.alg == Algorithm::Dis {
                    dis_schedule(&inst, &sol)?
                } else {
                    mdis_schedule(&inst, &sol)?
                };
                out["schedule"] = schedule_json(&s);
                out["wct"] = json!(wct(&s)?);
            }
            print_json(&out)
        }
        Algorithm::Cosmos | Algorithm::Odis => {
            let trace = sample_meetings(inst.workers(), a.seed)?;
            let (s, log) = if a.alg == Algorithm::Cosmos {
                cosmos_with(
                    &inst,
                    &trace,
                    CosmosOptions {
                        clamp: a.clamp,
                        tie: a.tie.into(),
                    },
                )?
            } else {
                odis(&inst, &trace, a.eta)?
            };
            for w in &log.warnings {
                log::warn!("{w}");
            }
            write_step_log(a.log_csv.as_deref(), &log)?;
            let value = evaluate(&inst, &s, &trace, a.eval)?;
            print_json(&json!({
                "algorithm": a.alg.name(),
                "seed": a.seed,
                "eval": format!("{:?}", a.eval).to_lowercase(),
                "schedule": schedule_json(&s),
                "wct": value,
                "planned_wct": log.wct_sequence(),
            }))
        }
    }
}

fn write_step_log(path: Option<&Path>, log: &OnlineStepLog) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, log.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_solve_lp(a: SolveLpArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    if let Some(p) = &a.dump_lp {
        let model = build_lp(&inst, &build_grid(inst.total_rst(), a.eta)?);
        let mut f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        model.dump(&mut f)?;
        f.flush()?;
    }
    let sol = relax(&inst, a.eta)?;
    let y: Vec<Value> = sol
        .nonzeros(1e-12)
        .into_iter()
        .map(|(i, j, l, v)| json!([i + 1, j + 1, l, v]))
        .collect();
    print_json(&json!({
        "objective": sol.objective,
        "cbar": sol.cbar,
        "y": y,
        "iterations": sol.iterations,
    }))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        m: a.m,
        ratio_nm: a.ratio,
        p: a.p,
        rst_mean: a.rst_mean,
        rst_std: a.rst_std,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let inst = gen_synthetic(&cfg)?;
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&inst.to_json())?)
}

fn cmd_parse_trace(a: ParseTraceArgs) -> Result<()> {
    let parsed = parse_trace(&a.file, a.strict).with_context(|| format!("parsing {}", a.file.display()))?;
    for m in &parsed.malformed {
        log::warn!("line {}: {}", m.line, m.reason);
    }
    let rates = estimate_lambdas(&parsed.log, a.requester, a.top_k, a.baseline.into())?;
    let workers: Vec<Value> = rates
        .iter()
        .map(|r| json!({"lambda": r.lambda, "peer": r.peer, "contacts": r.contacts}))
        .collect();
    let doc = json!({
        "requester": a.requester,
        "malformed_lines": parsed.malformed.len(),
        "workers": workers,
    });
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&doc)?)
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number '{s}' in range")))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        bail!("range must be start:end:step, got '{spec}'");
    };
    if !(step > 0.0) || end < start {
        bail!("range '{spec}' needs step > 0 and end ≥ start");
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + step * k as f64).collect())
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    if a.theorem1 {
        return report_counterexample(&a);
    }
    if a.bounds {
        let path = a.instance.as_deref().expect("clap enforces --instance");
        return verify_bounds(&load(path)?, &a);
    }
    bail!("choose --theorem1 or --bounds")
}

fn report_counterexample(a: &VerifyArgs) -> Result<bool> {
    let mut csv = String::from("t,m1,mn,m_lambda,rhs,wct_opt_closed_form,wct_opt,violated,violated_exact\n");
    println!("{:>7} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}  violated", "T", "M1", "Mn", "MΛ", "RHS", "OPT(T≥8)", "OPT");
    for t in parse_range(&a.t_range)? {
        let r = verify_counterexample(t)?;
        println!(
            "{:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}  {}{}",
            t,
            r.terms.m1,
            r.terms.mn,
            r.terms.m_lambda,
            r.rhs,
            r.wct_opt_closed_form,
            r.wct_opt,
            if r.violated { "yes" } else { "no" },
            if r.violated != r.violated_exact {
                " (exact optimum disagrees)"
            } else {
                ""
            }
        );
        csv.push_str(&format!(
            "{t},{},{},{},{},{},{},{},{}\n",
            r.terms.m1, r.terms.mn, r.terms.m_lambda, r.rhs, r.wct_opt_closed_form, r.wct_opt, r.violated, r.violated_exact
        ));
    }
    if let Some(p) = &a.csv {
        fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(true)
}

fn verify_bounds(inst: &Instance, a: &VerifyArgs) -> Result<bool> {
    let sol = relax(inst, a.eta)?;
    let opt = match brute_optimum(inst) {
        Ok((_, v)) => Some(v),
        Err(e) => {
            log::warn!("no exact optimum ({e}); greedy and online bounds use the LP objective");
            None
        }
    };
    let wct = |s: &Schedule| weighted_completion(inst, s);
    let trials = a.trials.max(1);
    let mut ris_total = 0.0;
    for k in 0..trials {
        ris_total += wct(&ris_round(inst, &sol, a.seed.wrapping_add(k))?)?;
    }
    let trace = sample_meetings(inst.workers(), a.seed)?;
    let (cs, _) = cosmos_with(inst, &trace, CosmosOptions::default())?;
    let (os, _) = odis(inst, &trace, a.eta)?;
    let results = [
        (Algorithm::Lrf, wct(&lrf_schedule(inst, TieRule::default()))?),
        (Algorithm::Ris, ris_total / trials as f64),
        (Algorithm::Dis, wct(&dis_schedule(inst, &sol)?)?),
        (Algorithm::Cosmos, evaluate(inst, &cs, &trace, EvalMode::Expected)?),
        (Algorithm::Odis, evaluate(inst, &os, &trace, EvalMode::Expected)?),
    ];
    let reports = audit_bounds(inst, &results, sol.objective, opt, a.eta);
    println!(
        "LP objective {:.6}; optimum {}",
        sol.objective,
        opt.map_or("not computed".to_string(), |v| format!("{v:.6}"))
    );
    println!("{:<18} {:<7} {:>12} {:>9} {:>9}  status", "bound", "alg", "wct", "ratio", "alpha");
    for r in &reports {
        println!(
            "{:<18} {:<7} {:>12.4} {:>9.4} {:>9.4}  {}",
            r.bound,
            r.algorithm,
            r.wct_alg,
            r.ratio,
            r.alpha,
            status(r)
        );
    }
    if let Some(p) = &a.csv {
        let mut csv = String::from("bound,algorithm,wct,reference,wct_ref,ratio,alpha,applicable,pass\n");
        for r in &reports {
            csv.push_str(&format!(
                "{},{},{},{:?},{},{},{},{},{}\n",
                r.bound, r.algorithm, r.wct_alg, r.reference, r.wct_ref, r.ratio, r.alpha, r.applicable, r.pass
            ));
        }
        fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(reports.iter().all(|r| r.pass))
}

fn status(r: &BoundReport) -> &'static str {
    match (r.applicable, r.pass) {
        (false, _) => "n/a",
        (true, true) => "ok",
        (true, false) => "VIOLATED",
    }
}

fn cmd_bench(a: BenchArgs) -> Result<bool> {
    let denominator = match a.denominator {
        DenominatorArg::Lp => Denominator::Lp,
        DenominatorArg::Brute => Denominator::Brute,
    };
    let result = if let Some(param) = a.sweep {
        let mut cfg = SweepConfig::new(param);
        if !a.values.is_empty() {
            cfg.values = a.values.clone();
        }
        cfg.instances = a.instances;
        cfg.algorithms = a.algs.clone();
        cfg.eta = a.eta;
        cfg.seed_base = a.seed_base;
        cfg.denominator = denominator;
        log::info!("sweep config hash {:016x}", cfg.hash());
        run_sweep(&cfg)?
    } else if !a.trace.is_empty() {
        if a.denominator != DenominatorArg::Lp {
            bail!("trace sweeps report ratios against the LP objective only");
        }
        let logs: Vec<ContactLog> = a
            .trace
            .iter()
            .map(|p| {
                let parsed = parse_trace(p, false).with_context(|| format!("parsing {}", p.display()))?;
                if !parsed.malformed.is_empty() {
                    log::warn!("{}: {} malformed line(s) skipped", p.display(), parsed.malformed.len());
                }
                Ok(parsed.log)
            })
            .collect::<Result<_>>()?;
        let requesters: Vec<Requester> = logs
            .iter()
            .flat_map(|log| a.requesters.iter().map(move |&id| Requester { log, id }))
            .collect();
        let mut cfg = TraceSweepConfig {
            top_k: a.top_k,
            instances: a.instances,
            algorithms: a.algs.clone(),
            eta: a.eta,
            seed_base: a.seed_base,
            baseline: a.baseline.into(),
            ..TraceSweepConfig::default()
        };
        if !a.values.is_empty() {
            cfg.ratios = a
                .values
                .iter()
                .map(|&v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        bail!("trace sweep ratios must be positive integers, got {v}")
                    }
                })
                .collect::<Result<_>>()?;
        }
        run_trace_sweep(&cfg, &requesters)?
    } else {
        bail!("choose --sweep <param> or --trace <file> --requesters <ids>");
    };
    report_sweep(&result, a.out.as_deref())
}

fn report_sweep(result: &SweepResult, out: Option<&Path>) -> Result<bool> {
    emit(out, result.to_csv().trim_end())?;
    for r in result.rows.iter().filter(|r| r.failures > 0) {
        log::warn!("{} = {}, {}: {} instance(s) failed", r.param, r.value, r.algorithm, r.failures);
    }
    for v in &result.violations {
        eprintln!("invariant violated: {v}");
    }
    Ok(result.violations.is_empty())
}
