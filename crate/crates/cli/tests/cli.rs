use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msn-sched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("UTF-8 temp path")
}

#[test]
fn gen_then_run_every_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let out = bin(&["gen", "--m", "3", "--ratio", "2", "--seed", "7", "-o", path(&inst)]);
    assert!(out.status.success());
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&inst).unwrap()).unwrap();
    assert_eq!(file["tasks"].as_array().unwrap().len(), 6);
    assert_eq!(file["workers"].as_array().unwrap().len(), 3);

    for alg in ["lrf", "ris", "dis", "mdis", "cosmos", "odis"] {
        let v = stdout_json(&bin(&["run", "--alg", alg, "--instance", path(&inst), "--seed", "3"]));
        assert!(v["wct"].as_f64().unwrap() > 0.0, "{alg}");
        let mut tasks: Vec<u64> = v["schedule"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|w| w["tasks"].as_array().unwrap().iter().map(|t| t.as_u64().unwrap()))
            .collect();
        tasks.sort_unstable();
        assert_eq!(tasks, (1..=6).collect::<Vec<_>>(), "{alg} must place each task once");
    }
}

#[test]
fn ris_trials_report_mean() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    assert!(bin(&["gen", "--m", "2", "--ratio", "3", "-o", path(&inst)]).status.success());
    let v = stdout_json(&bin(&["run", "--alg", "ris", "--instance", path(&inst), "--trials", "5"]));
    let trials: Vec<f64> = v["trial_wct"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(trials.len(), 5);
    let mean = trials.iter().sum::<f64>() / 5.0;
    assert!((v["mean_wct"].as_f64().unwrap() - mean).abs() < 1e-9);
    assert_eq!(v["bounds"]["ris"].as_f64(), Some(1.75));
}

#[test]
fn online_step_log_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let csv = dir.path().join("steps.csv");
    assert!(bin(&["gen", "--m", "3", "--ratio", "2", "-o", path(&inst)]).status.success());
    let out = bin(&["run", "--alg", "cosmos", "--instance", path(&inst), "--eval", "expected", "--log-csv", path(&csv)]);
    stdout_json(&out);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("step,worker,time,remaining,committed,wct"));
    assert_eq!(text.lines().count(), 1 + 1 + 3);
}

#[test]
fn solve_lp_reports_objective_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let dump = dir.path().join("lp.txt");
    std::fs::write(
        &inst,
        r#"{"tasks":[{"rst":1,"weight":1},{"rst":1,"weight":1},{"rst":2,"weight":2},{"rst":10,"weight":10}],
            "workers":[{"lambda":1.0},{"lambda":1.0,"contact":6.0}]}"#,
    )
    .unwrap();
    let v = stdout_json(&bin(&["solve-lp", "--instance", path(&inst), "--eta", "0.5", "--dump-lp", path(&dump)]));
    assert_eq!(v["cbar"].as_array().unwrap().len(), 4);
    assert!(v["objective"].as_f64().unwrap() <= 155.0);
    assert!(std::fs::read_to_string(&dump).unwrap().contains("minimize"));
}

#[test]
fn counterexample_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t1.csv");
    let out = bin(&["verify", "--theorem1", "--t-range", "1:30:0.5", "--csv", path(&csv)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 59);
    for r in &rows {
        let t: f64 = r[0].parse().unwrap();
        assert_eq!(r[7] == "true", t > 4.0 && t < 20.0, "T = {t}");
    }
}

#[test]
fn bound_audit_passes_on_generated_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let csv = dir.path().join("bounds.csv");
    assert!(bin(&["gen", "--m", "2", "--ratio", "3", "--seed", "2", "-o", path(&inst)]).status.success());
    let out = bin(&["verify", "--bounds", "--instance", path(&inst), "--trials", "50", "--csv", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("bound,algorithm"));
}

#[test]
fn bench_sweep_writes_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "bench".to_string(),
            "--sweep".into(),
            "workers".into(),
            "--values".into(),
            "2,3".into(),
            "--instances".into(),
            "2".into(),
            "--seed-base".into(),
            "9".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    for p in [&a, &b] {
        let argv = args(p);
        let out = bin(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("param,value,algorithm,mean_ratio,stderr,mean_wct,mean_lp,seed_base"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn bench_rejects_online_algorithms() {
    let out = bin(&["bench", "--sweep", "p", "--algs", "cosmos", "--instances", "1"]);
    assert!(!out.status.success());
}

#[test]
fn trace_parsing_and_trace_bench() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    let mut text = String::from("# trace-start: 0\n");
    for k in 1..=40 {
        let t = k as f64;
        text.push_str(&format!("1 2 {} {}\n", t, t + 0.5));
        if k % 2 == 0 {
            text.push_str(&format!("3 1 {} {}\n", t, t + 0.1));
        }
        if k % 4 == 0 {
            text.push_str(&format!("1 4 {} {}\n", t, t + 0.1));
        }
    }
    std::fs::write(&trace, &text).unwrap();
    let v = stdout_json(&bin(&["parse-trace", "--file", path(&trace), "--requester", "1", "--top-k", "2"]));
    let peers: Vec<u64> = v["workers"].as_array().unwrap().iter().map(|w| w["peer"].as_u64().unwrap()).collect();
    assert_eq!(peers, vec![2, 3]);
    assert!((v["workers"][0]["lambda"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = bin(&[
        "bench", "--trace", path(&trace), "--requesters", "1", "--values", "2", "--instances", "2", "--top-k", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1 + 3);

    std::fs::write(&trace, format!("{text}not a record\n")).unwrap();
    assert!(bin(&["parse-trace", "--file", path(&trace), "--requester", "1"]).status.success());
    assert!(!bin(&["parse-trace", "--file", path(&trace), "--requester", "1", "--strict"]).status.success());
}
