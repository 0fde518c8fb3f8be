//! Run files: a workload plus optional server, network and client settings.
//!
//! ```toml
//! requests = 5000
//! deadline_s = 0.3
//! seed = 7
//! process = { kind = "poisson", rate = 100.0 }
//! [mix]
//! vgg16 = 1.0
//! [server]
//! scheduler = "ours-time"
//! granularity = { groups = 5 }
//! [network]
//! trace = "../traces/lte.csv"
//! [clients]
//! count = 10
//! offload = "partial"
//! profile = "../clients/jetson_nano.json"
//! ```
//!
//! Relative paths resolve against the run file's directory. Callers layer
//! command-line overrides on top through [`Overrides`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use layerbatch_core::ProfileSet64;

use crate::engine::{ClientSetup, Granularity, SchedulerKind, SimConfig};
use crate::error::SimError;
use crate::network::{scale_trace, NetworkTrace};
use crate::offload::{ClientProfile, OffloadMode, PartialRule};
use crate::workload::{ArrivalProcess, SizeModel, WorkloadSpec};

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSection {
    pub scheduler: Option<SchedulerKind>,
    pub bound: Option<usize>,
    pub granularity: Option<Granularity>,
    pub drop_expired: Option<bool>,
    pub share_layers: Option<bool>,
    pub step_overhead_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub trace: Option<PathBuf>,
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSection {
    pub count: Option<usize>,
    pub offload: Option<OffloadMode>,
    pub rule: Option<PartialRule>,
    pub profile: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct RunFile {
    #[serde(flatten)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub server: ServerSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub clients: ClientSection,
}

impl RunFile {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let mut f: RunFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let SizeModel::Trace { path } = &mut f.workload.sizes {
            fix(path);
        }
        f.network.trace.as_mut().map(fix);
        f.clients.profile.as_mut().map(fix);
        Ok(f)
    }
}

/// Values given on the command line; each one beats the run file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rate: Option<f64>,
    pub process: Option<String>,
    pub requests: Option<usize>,
    pub deadline_s: Option<f64>,
    pub scheduler: Option<SchedulerKind>,
    pub bound: Option<usize>,
    pub groups: Option<usize>,
    pub drop_expired: Option<bool>,
    pub trace: Option<PathBuf>,
    pub trace_scale: Option<f64>,
    pub clients: Option<usize>,
    pub offload: Option<OffloadMode>,
    pub client_profile: Option<PathBuf>,
}

/// Parses `poisson`, `pareto` or `constant` at `rate`.
pub fn parse_process(name: &str, rate: f64) -> Result<ArrivalProcess, SimError> {
    match name {
        "poisson" => Ok(ArrivalProcess::Poisson { rate }),
        "pareto" => Ok(ArrivalProcess::Pareto { rate, alpha: crate::workload::DEFAULT_PARETO_ALPHA }),
        "constant" => Ok(ArrivalProcess::Constant { rate }),
        _ => Err(SimError::Workload(format!("unknown arrival process `{name}` (poisson, pareto, constant)"))),
    }
}

/// Merges file values, overrides and defaults into a runnable setup.
pub fn resolve(file: &RunFile, o: &Overrides, profiles: &ProfileSet64) -> Result<(WorkloadSpec, SimConfig), SimError> {
    let mut w = file.workload.clone();
    if let Some(s) = o.seed {
        w.seed = s;
    }
    let rate = o.rate.unwrap_or(w.process.rate());
    w.process = match &o.process {
        Some(p) => parse_process(p, rate)?,
        None => w.process.with_rate(rate),
    };
    if let Some(n) = o.requests {
        w.requests = n;
    }
    if let Some(d) = o.deadline_s {
        w.deadline_s = d;
    }
    w.validate()?;

    let s = &file.server;
    let mut cfg = SimConfig {
        scheduler: o.scheduler.or(s.scheduler).unwrap_or_default(),
        bound: o.bound.or(s.bound),
        granularity: o.groups.map(Granularity::Groups).or(s.granularity).unwrap_or_default(),
        drop_expired: o.drop_expired.or(s.drop_expired).unwrap_or(true),
        share_layers: s.share_layers.unwrap_or(true),
        step_overhead_s: s.step_overhead_ms.unwrap_or(0.0) / 1e3,
        ..SimConfig::default()
    };

    if let Some(path) = o.trace.as_ref().or(file.network.trace.as_ref()) {
        let t = NetworkTrace::load_csv(path)?;
        let factor = o.trace_scale.or(file.network.scale).unwrap_or(1.0);
        cfg.trace = Some(Arc::new(scale_trace(&t, factor)?));
    }

    let c = &file.clients;
    let count = o.clients.or(c.count);
    let mode = o.offload.or(c.offload).unwrap_or_default();
    if let Some(count) = count {
        let profile = match o.client_profile.as_ref().or(c.profile.as_ref()) {
            Some(p) => ClientProfile::load(p, profiles)?,
            None if mode == OffloadMode::None => {
                ClientProfile { compress: 0.0, decompress: 0.0, dnns: Default::default() }
            }
            None => return Err(SimError::Client(format!("offload mode {mode:?} needs a client profile"))),
        };
        cfg.clients = Some(ClientSetup { count, mode, rule: c.rule.unwrap_or_default(), profile: Arc::new(profile) });
    } else if mode != OffloadMode::None {
        return Err(SimError::Client("offloading needs a client count".into()));
    }
    Ok((w, cfg))
}
