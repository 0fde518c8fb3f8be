//! `layerbatch`: simulate, sweep capacity, inspect profiles and run the
//! brute-force oracle suites.
//!
//! Settings come from command-line flags first, then the run file, then
//! built-in defaults. Exit codes: 0 success, 1 oracle or check failure,
//! 2 usage or configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use layerbatch_core::oracle;
use layerbatch_core::{check_subadditivity, ProfileSet64};
use layerbatch_sim::config::parse_process;
use layerbatch_sim::report::{aggregate_sweep, save_outcomes, save_summary, write_sweep};
use layerbatch_sim::{
    capacity_of, resolve, simulate, sweep_grid, OffloadMode, Overrides, RunFile, SchedulerKind, SummaryMetrics,
};

/// Directory searched for profiles given by name.
const PROFILE_DIR_ENV: &str = "LAYERBATCH_PROFILE_DIR";
const DEFAULT_PROFILE: &str = "reference.json";

#[derive(Parser)]
#[command(name = "layerbatch", version, about = "Batching-aware DNN inference scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write per-request outcomes plus a summary.
    Simulate(SimulateArgs),
    /// Sweep arrival rates and report each scheduler's capacity.
    SweepCapacity(SweepArgs),
    /// Load a profile and report its layers, batching gains and anomalies.
    ValidateProfile(ValidateArgs),
    /// Compare the schedulers against brute-force enumeration.
    OracleCheck(OracleArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run file (TOML, or JSON by extension).
    #[arg(long)]
    workload: PathBuf,
    /// Profile path, or a file name inside $LAYERBATCH_PROFILE_DIR.
    #[arg(long)]
    profile: Option<String>,
    /// Workload seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Arrival process: poisson, pareto or constant.
    #[arg(long)]
    process: Option<String>,
    /// Number of generated requests.
    #[arg(long)]
    requests: Option<usize>,
    /// Relative deadline in milliseconds.
    #[arg(long)]
    deadline_ms: Option<f64>,
    /// Batch bound B, in requests.
    #[arg(long)]
    bound: Option<usize>,
    /// Run steps over this many layer groups per component.
    #[arg(long)]
    groups: Option<usize>,
    /// Keep requests past their deadline instead of dropping them.
    #[arg(long)]
    no_drop: bool,
    /// Throughput trace CSV (`timestamp_s,throughput_mbps`).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Multiply every trace throughput by this factor.
    #[arg(long)]
    trace_scale: Option<f64>,
    /// Number of client devices sharing the request stream.
    #[arg(long)]
    clients: Option<usize>,
    /// none, binary or partial.
    #[arg(long)]
    offload: Option<OffloadMode>,
    /// Client runtimes (JSON).
    #[arg(long)]
    client_profile: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// ours-time, ours-tardy, edf, batch or no-batch.
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    /// Mean arrival rate, requests per second.
    #[arg(long)]
    rate: Option<f64>,
    /// Outcome CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON; defaults to the outcome path with `.summary.json`.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `start:stop:step`, or a comma-separated list.
    #[arg(long, default_value = "10:350:10")]
    rates: String,
    /// Comma-separated schedulers; all five when omitted.
    #[arg(long, value_delimiter = ',')]
    schedulers: Vec<SchedulerKind>,
    /// Number of seeds, counting up from the workload seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Sweep CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    profile: Option<String>,
    /// Also show each DNN split into this many groups.
    #[arg(long)]
    groups: Option<usize>,
    /// Exit 1 when any table breaks sub-additivity.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Random instances per suite.
    #[arg(long, default_value_t = 200)]
    instances: u64,
    /// Most requests per instance (brute force is exponential in this).
    #[arg(long, default_value_t = 8)]
    max_n: usize,
    /// Seed of the first instance; instance i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Batch bound; unbounded when omitted.
    #[arg(long)]
    bound: Option<usize>,
    /// dp, tardy, multi or all.
    #[arg(long, default_value = "all")]
    suite: String,
}

/// An oracle or check failure, as opposed to bad input.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn profile_path(given: Option<&str>) -> Result<PathBuf> {
    let dir = std::env::var_os(PROFILE_DIR_ENV).map(PathBuf::from);
    match (given, dir) {
        (Some(p), dir) => {
            let direct = PathBuf::from(p);
            if direct.exists() {
                return Ok(direct);
            }
            if let Some(d) = dir {
                for name in [p.to_string(), format!("{p}.json")] {
                    if d.join(&name).exists() {
                        return Ok(d.join(name));
                    }
                }
            }
            bail!("profile `{p}` not found")
        }
        (None, Some(d)) => Ok(d.join(DEFAULT_PROFILE)),
        (None, None) => bail!("no --profile given and ${PROFILE_DIR_ENV} is unset"),
    }
}

fn load_profiles(given: Option<&str>) -> Result<ProfileSet64> {
    let path = profile_path(given)?;
    ProfileSet64::load(&path).with_context(|| format!("loading profile {}", path.display()))
}

fn overrides(run: &RunArgs, scheduler: Option<SchedulerKind>, rate: Option<f64>) -> Overrides {
    Overrides {
        seed: run.seed,
        rate,
        process: run.process.clone(),
        requests: run.requests,
        deadline_s: run.deadline_ms.map(|d| d / 1e3),
        scheduler,
        bound: run.bound,
        groups: run.groups,
        drop_expired: run.no_drop.then_some(false),
        trace: run.trace.clone(),
        trace_scale: run.trace_scale,
        clients: run.clients,
        offload: run.offload,
        client_profile: run.client_profile.clone(),
    }
}

fn print_summary(s: &SummaryMetrics) {
    println!("generated      {}", s.generated);
    println!("completed      {}", s.completed);
    println!("dropped        {}", s.dropped);
    println!("on-time        {} ({:.4})", s.on_time, s.on_time_ratio);
    println!("mean   ms      {:.3}", s.mean_completion_s * 1e3);
    println!("median ms      {:.3}", s.median_completion_s * 1e3);
    println!("p95    ms      {:.3}", s.p95_completion_s * 1e3);
    for (loc, n) in &s.by_location {
        println!("at {loc:<11} {n}");
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let profiles = load_profiles(a.run.profile.as_deref())?;
    let file = RunFile::load(&a.run.workload)?;
    let (spec, cfg) = resolve(&file, &overrides(&a.run, a.scheduler, a.rate), &profiles)?;
    let run = simulate(&spec, &profiles, &cfg)?;
    save_outcomes(&a.out, &run.outcomes)?;
    let summary = a.summary.clone().unwrap_or_else(|| a.out.with_extension("summary.json"));
    save_summary(&summary, &run.summary)?;
    println!("scheduler      {}", cfg.scheduler);
    print_summary(&run.summary);
    Ok(())
}

fn parse_rates(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let rates = if parts.len() == 3 {
        let [a, b, step] = [parts[0], parts[1], parts[2]].map(|x| x.trim().parse::<f64>());
        let (a, b, step) = (a?, b?, step?);
        if !(step > 0.0) {
            bail!("rate step must be positive");
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + step * i as f64).collect()
    } else {
        s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>()?
    };
    if rates.is_empty() || rates.iter().any(|r| !(*r > 0.0)) {
        bail!("rates must be positive");
    }
    if rates.windows(2).any(|w| !(w[0] < w[1])) {
        bail!("rates must be strictly ascending");
    }
    Ok(rates)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let rates = parse_rates(&a.rates).with_context(|| format!("bad --rates `{}`", a.rates))?;
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let profiles = load_profiles(a.run.profile.as_deref())?;
    let file = RunFile::load(&a.run.workload)?;
    let (spec, cfg) = resolve(&file, &overrides(&a.run, None, Some(rates[0])), &profiles)?;
    if let Some(p) = &a.run.process {
        parse_process(p, rates[0])?;
    }
    let schedulers: Vec<SchedulerKind> =
        if a.schedulers.is_empty() { SchedulerKind::ALL.to_vec() } else { a.schedulers.clone() };
    let seeds: Vec<u64> = (0..a.seeds).map(|i| spec.seed + i).collect();
    let points = sweep_grid(&spec, &rates, &seeds, &schedulers, &profiles, &cfg)?;
    let rows = aggregate_sweep(&points);
    let f = std::fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_sweep(std::io::BufWriter::new(f), &rows)?;
    for s in &schedulers {
        let curve: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.scheduler == s.name()).map(|r| (r.rate, r.on_time_mean)).collect();
        match capacity_of(&curve) {
            Some(c) => println!("{:<11} capacity {c} req/s", s.name()),
            None => println!("{:<11} capacity none", s.name()),
        }
    }
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let profiles = load_profiles(a.profile.as_deref())?;
    println!("max batch {}", profiles.max_batch());
    let mut broken = 0;
    for c in profiles.components() {
        let v = check_subadditivity(&c.cost);
        let shared = if profiles.is_shared(&c.id) { " shared" } else { "" };
        println!("component {} layers {}{shared}", c.id.0, c.num_layers());
        if let Some(first) = v.first() {
            broken += 1;
            println!(
                "  warning: {} sub-additivity violations, e.g. layer {} h({}) = {:.4} ms > h({}) + h({}) = {:.4} ms",
                v.len(),
                first.layer,
                first.b1 + first.b2,
                first.combined * 1e3,
                first.b1,
                first.b2,
                first.separate * 1e3
            );
        }
    }
    for d in profiles.dnns() {
        let t = profiles.table(&d.id).expect("loaded dnn has a table");
        let solo = t.total_at(1).unwrap_or(0.0);
        let stages: Vec<&str> = d.stages.iter().map(|s| s.component.0.as_str()).collect();
        print!("dnn {} layers {} stages [{}] solo {:.3} ms", d.id, t.num_layers(), stages.join(", "), solo * 1e3);
        for b in [10, 20] {
            if let Some(r) = t.per_request_reduction(b) {
                print!(" reduction@{b} {:.1}%", r * 100.0);
            }
        }
        println!();
        if let Some(g) = a.groups {
            let groups = layerbatch_core::group_layers(&t.solo_layers(), g.min(t.num_layers()))?;
            let agg = t.aggregate(&groups);
            let parts: Vec<String> = groups
                .iter()
                .zip(agg.solo_layers())
                .map(|(r, h)| format!("{}..{} {:.2} ms", r.start(), r.end(), h * 1e3))
                .collect();
            println!("  groups: {}", parts.join(" | "));
        }
    }
    if a.strict && broken > 0 {
        return Err(CheckFailed(format!("{broken} components break sub-additivity")).into());
    }
    Ok(())
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let suites: Vec<&str> = match a.suite.as_str() {
        "all" => vec!["dp", "tardy", "multi"],
        s @ ("dp" | "tardy" | "multi") => vec![s],
        s => bail!("unknown suite `{s}` (dp, tardy, multi, all)"),
    };
    if a.max_n == 0 || a.max_n > 12 {
        bail!("--max-n must be within 1..=12 for brute force");
    }
    let mut failures = 0;
    for suite in suites {
        let mut bad = 0;
        for i in 0..a.instances {
            let seed = a.seed.wrapping_add(i);
            let r = match suite {
                "dp" => oracle::check_dp(seed, a.max_n, a.bound),
                "tardy" => oracle::check_tardy(seed, a.max_n, a.bound),
                _ => oracle::check_multi(seed, a.bound),
            };
            if let Err(m) = r {
                bad += 1;
                println!("MISMATCH {m}");
                println!(
                    "  reproduce: layerbatch oracle-check --suite {suite} --seed {seed} --instances 1 --max-n {}{}",
                    a.max_n,
                    a.bound.map(|b| format!(" --bound {b}")).unwrap_or_default()
                );
            }
        }
        println!("{suite:<6} {} instances, {bad} mismatches", a.instances);
        failures += bad;
    }
    if failures > 0 {
        return Err(CheckFailed(format!("{failures} oracle mismatches")).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::SweepCapacity(a) => cmd_sweep(a),
        Cmd::ValidateProfile(a) => cmd_validate(a),
        Cmd::OracleCheck(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
