use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerbatch"))
        .args(args)
        .current_dir(root())
        .env("LAYERBATCH_PROFILE_DIR", root().join("data/profiles"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("layerbatch-cli-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d.join(name)
}

#[test]
fn simulate_writes_outcomes_and_summary() {
    let out = tmp("run.csv");
    let o = run(&[
        "simulate",
        "--workload",
        "data/workloads/vgg16_poisson.toml",
        "--requests",
        "300",
        "--scheduler",
        "edf",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("scheduler      edf"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 301);
    let summary = std::fs::read_to_string(out.with_extension("summary.json")).unwrap();
    assert!(summary.contains("\"generated\": 300"), "{summary}");
}

#[test]
fn same_seed_same_file() {
    let a = tmp("a.csv");
    let b = tmp("b.csv");
    for p in [&a, &b] {
        let o = run(&[
            "simulate",
            "--workload",
            "data/workloads/shared_flow.toml",
            "--requests",
            "200",
            "--seed",
            "9",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn sweep_reports_capacities() {
    let out = tmp("sweep.csv");
    let o = run(&[
        "sweep-capacity",
        "--workload",
        "data/workloads/vgg16_poisson.toml",
        "--requests",
        "300",
        "--rates",
        "20,60,100",
        "--schedulers",
        "ours-time,no-batch",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.starts_with("no-batch") && l.contains("capacity")), "{s}");
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 7);
}

#[test]
fn validate_profile_lists_every_dnn() {
    let o = run(&["validate-profile", "--groups", "5"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for d in ["vgg16", "resnet50", "fcn", "googlenet", "ssd", "sdcnet", "rta"] {
        assert!(s.contains(&format!("dnn {d} ")), "{d} missing");
    }
    assert!(s.contains("reduction@10 88.3%"));
    let strict = run(&["validate-profile", "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn oracle_check_passes() {
    let o = run(&["oracle-check", "--instances", "30", "--max-n", "6"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("multi  30 instances, 0 mismatches"));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = tmp("x.csv");
    let bad_sched = run(&[
        "simulate",
        "--workload",
        "data/workloads/vgg16_poisson.toml",
        "--scheduler",
        "fastest",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(bad_sched.status.code(), Some(2));
    let missing = run(&["simulate", "--workload", "nope.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let no_profile = run(&["validate-profile", "--profile", "missing.json"]);
    assert_eq!(no_profile.status.code(), Some(2));
    let rates = run(&[
        "sweep-capacity",
        "--workload",
        "data/workloads/vgg16_poisson.toml",
        "--rates",
        "50,20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(rates.status.code(), Some(2));
    let suite = run(&["oracle-check", "--suite", "everything"]);
    assert_eq!(suite.status.code(), Some(2));
}
