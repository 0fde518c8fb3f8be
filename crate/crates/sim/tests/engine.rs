use std::path::PathBuf;
use std::sync::Arc;

use layerbatch_core::oracle::{self, TableShape};
use layerbatch_core::{compute_schedule, CostTable64, DnnId, Location, ProfileSet64, Request64, SharedComponent};
use layerbatch_sim::report::outcomes_csv;
use layerbatch_sim::*;
use rand::Rng;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn reference() -> ProfileSet64 {
    ProfileSet64::load(data("profiles/reference.json")).unwrap()
}

fn single(table: CostTable64) -> ProfileSet64 {
    let layers = table.num_layers();
    let max_batch = table.max_batch();
    let c = SharedComponent {
        id: "net".into(),
        layer_names: (1..=layers).map(|k| format!("l{k}")).collect(),
        cost: table,
        output_bits: vec![1e5; layers],
    };
    ProfileSet64::from_parts(max_batch, vec![c], vec![("net", vec!["net"])]).unwrap()
}

fn closed(n: usize, dnn: &str) -> Workload {
    let arrivals = (0..n as u64).map(|id| Arrival { id, time: 0.0, dnn: DnnId::from(dnn), size_bits: 2e5 }).collect();
    Workload { arrivals, deadline_s: 1e9 }
}

fn total_latency(r: &SimResult) -> f64 {
    r.outcomes.iter().map(|o| o.latency().unwrap()).sum()
}

#[test]
fn closed_instances_match_the_dp() {
    for seed in 0..150 {
        let mut rng = oracle::rng(seed);
        let n = rng.random_range(1..=8);
        let layers = rng.random_range(1..=6);
        let shape = if seed % 2 == 0 { TableShape::Concave } else { TableShape::Arbitrary };
        let table: CostTable64 = oracle::random_table(&mut rng, layers, n.max(2), shape, 20);
        let profiles = single(table.clone());
        let r = run_sim(&closed(n, "net"), &profiles, &SimConfig::default()).unwrap();
        let rs: Vec<Request64> = (0..n as u64).map(|i| Request64::new(i, "net", 0.0, f64::INFINITY)).collect();
        let dp = compute_schedule(&rs, &table, usize::MAX).unwrap().objective;
        let sim = total_latency(&r);
        assert!((sim - dp).abs() <= 1e-9 * dp.abs().max(1.0), "seed {seed}: sim {sim} dp {dp}");
    }
}

#[test]
fn lone_googlenet_request() {
    let profiles = reference();
    let trace = NetworkTrace::constant(10e6).unwrap();
    let w = Workload {
        arrivals: vec![Arrival { id: 0, time: 0.5, dnn: "googlenet".into(), size_bits: 2e5 }],
        deadline_s: 1.0,
    };
    let cfg = SimConfig { trace: Some(Arc::new(trace)), ..SimConfig::default() };
    let r = run_sim(&w, &profiles, &cfg).unwrap();
    let o = &r.outcomes[0];
    assert!((o.network_delay - 0.02).abs() < 1e-12);
    assert!((o.latency().unwrap() - 0.044).abs() < 1e-6, "{:?}", o.latency());
    assert!(o.on_time);
}

#[test]
fn no_requests() {
    let w = Workload { arrivals: vec![], deadline_s: 0.1 };
    let r = run_sim(&w, &reference(), &SimConfig::default()).unwrap();
    assert!(r.outcomes.is_empty());
    assert_eq!(r.summary.generated, 0);
}

#[test]
fn unknown_dnn_is_rejected() {
    let w = closed(1, "alexnet");
    assert!(matches!(run_sim(&w, &reference(), &SimConfig::default()), Err(SimError::UnknownDnn(_))));
}

fn lte() -> Arc<NetworkTrace> {
    Arc::new(NetworkTrace::load_csv(data("traces/lte.csv")).unwrap())
}

fn busy_spec(rate: f64) -> WorkloadSpec {
    WorkloadSpec::new(ArrivalProcess::Poisson { rate }, 600, "vgg16", 0.15, 3)
}

#[test]
fn every_scheduler_conserves_requests_and_respects_time() {
    let profiles = reference();
    for s in SchedulerKind::ALL {
        for g in [Granularity::Layers, Granularity::Groups(5)] {
            let cfg = SimConfig {
                scheduler: s,
                granularity: g,
                trace: Some(lte()),
                record_steps: true,
                bound: Some(16),
                ..SimConfig::default()
            };
            let spec = busy_spec(160.0);
            let r = simulate(&spec, &profiles, &cfg).unwrap();
            let arrivals = generate_arrivals(&spec).unwrap();
            assert_eq!(r.outcomes.len(), 600, "{s}");
            assert_eq!(r.summary.completed + r.summary.dropped, 600);
            for (o, a) in r.outcomes.iter().zip(&arrivals) {
                assert_eq!(o.id.0, a.id);
                assert!((o.arrival - a.time).abs() < 1e-12);
                if let Some(c) = o.completion {
                    assert!(c >= o.arrival + o.network_delay - 1e-12, "{s} {g:?}: request {} finished early", a.id);
                    assert!(o.on_time == (c <= o.deadline + 1e-12));
                }
            }
            for w in r.steps.windows(2) {
                assert!(w[1].start >= w[0].end - 1e-12, "{s}: overlapping steps");
            }
            assert!(r.steps.iter().all(|st| !st.ids.is_empty() && st.ids.len() <= 16), "{s}: bound");
            assert!(r.stats.largest_batch <= 16);
        }
    }
}

#[test]
fn no_batch_runs_singletons_and_never_idles_with_work() {
    let profiles = reference();
    let cfg = SimConfig {
        scheduler: SchedulerKind::NoBatch,
        record_steps: true,
        drop_expired: false,
        ..SimConfig::default()
    };
    let w = closed(4, "vgg16");
    let r = run_sim(&w, &profiles, &cfg).unwrap();
    assert!(r.steps.iter().all(|s| s.ids.len() == 1));
    for w in r.steps.windows(2) {
        assert!((w[1].start - w[0].end).abs() < 1e-12);
    }
    let ends: Vec<f64> = r.outcomes.iter().map(|o| o.completion.unwrap()).collect();
    for (i, e) in ends.iter().enumerate() {
        assert!((e - 0.018 * (i + 1) as f64).abs() < 1e-9, "{ends:?}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let profiles = reference();
    let cfg = SimConfig { granularity: Granularity::Groups(5), trace: Some(lte()), ..SimConfig::default() };
    let a = outcomes_csv(&simulate(&busy_spec(120.0), &profiles, &cfg).unwrap().outcomes).unwrap();
    let b = outcomes_csv(&simulate(&busy_spec(120.0), &profiles, &cfg).unwrap().outcomes).unwrap();
    assert_eq!(a, b);
    let c = outcomes_csv(&simulate(&busy_spec(120.0).with_seed(4), &profiles, &cfg).unwrap().outcomes).unwrap();
    assert_ne!(a, c);
}

#[test]
fn incremental_tables_do_not_change_results() {
    let profiles = reference();
    let on = SimConfig { trace: Some(lte()), ..SimConfig::default() };
    let off = SimConfig { incremental: false, ..on.clone() };
    let a = simulate(&busy_spec(140.0), &profiles, &on).unwrap();
    let b = simulate(&busy_spec(140.0), &profiles, &off).unwrap();
    assert_eq!(outcomes_csv(&a.outcomes).unwrap(), outcomes_csv(&b.outcomes).unwrap());
}

#[test]
fn expired_requests_are_dropped_only_when_enabled() {
    let profiles = reference();
    let spec = WorkloadSpec::new(ArrivalProcess::Poisson { rate: 400.0 }, 400, "vgg16", 0.05, 1);
    let keep = SimConfig { drop_expired: false, ..SimConfig::default() };
    assert_eq!(simulate(&spec, &profiles, &keep).unwrap().summary.dropped, 0);
    assert!(simulate(&spec, &profiles, &SimConfig::default()).unwrap().summary.dropped > 0);
}

#[test]
fn shared_stages_batch_across_dnns() {
    let profiles = reference();
    let mut spec = WorkloadSpec::new(ArrivalProcess::Poisson { rate: 60.0 }, 400, "sdcnet", 0.3, 5);
    spec.mix = [("sdcnet".to_string(), 0.5), ("rta".to_string(), 0.5)].into();
    let shared = SimConfig { record_steps: true, drop_expired: false, ..SimConfig::default() };
    let apart = SimConfig { share_layers: false, ..shared.clone() };
    let a = simulate(&spec, &profiles, &shared).unwrap();
    let b = simulate(&spec, &profiles, &apart).unwrap();
    assert_eq!(a.summary.completed, 400);
    assert_eq!(b.summary.completed, 400);
    let rta: Vec<u64> = a.outcomes.iter().filter(|o| o.dnn.as_str() == "rta").map(|o| o.id.0).collect();
    let mixed = a.steps.iter().any(|s| {
        let n = s.ids.iter().filter(|id| rta.contains(&id.0)).count();
        n > 0 && n < s.ids.len()
    });
    assert!(mixed, "no step mixed sdcnet and rta requests");
    assert!(a.summary.mean_completion_s <= b.summary.mean_completion_s * 1.02);
}

fn client_cfg(mode: OffloadMode, count: usize) -> SimConfig {
    let profiles = reference();
    let cp = ClientProfile::load(data("clients/jetson_nano.json"), &profiles).unwrap();
    SimConfig {
        granularity: Granularity::Groups(5),
        trace: Some(lte()),
        clients: Some(ClientSetup { count, mode, rule: PartialRule::MinCompletion, profile: Arc::new(cp) }),
        ..SimConfig::default()
    }
}

#[test]
fn clients_place_work_everywhere_it_pays() {
    let profiles = reference();
    let mut spec = WorkloadSpec::new(ArrivalProcess::Poisson { rate: 250.0 }, 1500, "vgg16", 0.5, 2);
    spec.mix = [("vgg16".to_string(), 0.5), ("fcn".to_string(), 0.5)].into();
    for mode in [OffloadMode::None, OffloadMode::Binary, OffloadMode::Partial] {
        let r = simulate(&spec, &profiles, &client_cfg(mode, 10)).unwrap();
        assert_eq!(r.outcomes.len(), 1500);
        for o in &r.outcomes {
            if let (Location::ClientFull, Some(_)) = (o.location, o.completion) {
                assert_eq!(o.server_time, 0.0);
                assert!(o.client_time > 0.0);
            }
        }
        let locals = r.outcomes.iter().filter(|o| o.location != Location::Server && !o.dropped()).count();
        match mode {
            OffloadMode::None => assert_eq!(locals, 0),
            _ => assert!(locals > 0, "{mode:?} never used the client"),
        }
    }
}

#[test]
fn partial_offload_is_not_worse_than_full_offload_under_load() {
    let profiles = reference();
    let mut spec = WorkloadSpec::new(ArrivalProcess::Poisson { rate: 300.0 }, 1500, "vgg16", 0.5, 9);
    spec.mix = [("vgg16".to_string(), 0.5), ("fcn".to_string(), 0.5)].into();
    let none = simulate(&spec, &profiles, &client_cfg(OffloadMode::None, 10)).unwrap().summary;
    let part = simulate(&spec, &profiles, &client_cfg(OffloadMode::Partial, 10)).unwrap().summary;
    assert!(
        part.on_time_ratio >= none.on_time_ratio,
        "partial {} vs server-only {}",
        part.on_time_ratio,
        none.on_time_ratio
    );
}

#[test]
fn shipped_run_files_resolve_and_run() {
    let profiles = reference();
    for name in ["vgg16_poisson.toml", "clients_partial.toml", "shared_flow.toml"] {
        let file = RunFile::load(data(&format!("workloads/{name}"))).unwrap();
        let o = Overrides { requests: Some(200), ..Overrides::default() };
        let (spec, cfg) = resolve(&file, &o, &profiles).unwrap();
        assert_eq!(spec.requests, 200);
        let r = simulate(&spec, &profiles, &cfg).unwrap();
        assert_eq!(r.summary.generated, 200, "{name}");
    }
}

#[test]
fn overrides_beat_the_file() {
    let profiles = reference();
    let file = RunFile::load(data("workloads/vgg16_poisson.toml")).unwrap();
    let o =
        Overrides { rate: Some(33.0), scheduler: Some(SchedulerKind::Edf), groups: Some(3), ..Overrides::default() };
    let (spec, cfg) = resolve(&file, &o, &profiles).unwrap();
    assert_eq!(spec.process, ArrivalProcess::Poisson { rate: 33.0 });
    assert_eq!(cfg.scheduler, SchedulerKind::Edf);
    assert_eq!(cfg.granularity, Granularity::Groups(3));
    let (spec, cfg) = resolve(&file, &Overrides::default(), &profiles).unwrap();
    assert_eq!(spec.process, ArrivalProcess::Poisson { rate: 100.0 });
    assert_eq!(cfg.scheduler, SchedulerKind::OursTime);
    assert_eq!(cfg.granularity, Granularity::Groups(5));
}

#[test]
fn sweep_points_are_ordered_and_repeatable() {
    let profiles = reference();
    let t = busy_spec(10.0);
    let rates = [60.0, 120.0];
    let seeds = [1, 2];
    let ks = [SchedulerKind::Batch, SchedulerKind::OursTime];
    let a = sweep_grid(&t, &rates, &seeds, &ks, &profiles, &SimConfig::default()).unwrap();
    let b = sweep_grid(&t, &rates, &seeds, &ks, &profiles, &SimConfig::default()).unwrap();
    assert_eq!(a, b);
    let keys: Vec<_> = a.iter().map(|p| (p.scheduler, p.rate as u32, p.seed)).collect();
    assert_eq!(keys[0], (SchedulerKind::Batch, 60, 1));
    assert_eq!(keys[7], (SchedulerKind::OursTime, 120, 2));
}
