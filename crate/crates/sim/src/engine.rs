//! Discrete-event simulation of one server and its clients.
//!
//! The server runs one step at a time: one layer (or one layer group when
//! grouped) for one batch, without preemption. Plans come from the chosen
//! scheduler and are revised only at step boundaries. All events sharing a
//! timestamp are applied before the server picks its next step, so requests
//! arriving together are scheduled together.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use layerbatch_core::{
    baseline_batch, baseline_no_batch, compute_schedule, compute_schedule_layer_units, drop_expired, edf_batch,
    group_layers, reschedule_trigger, schedule_multi, schedule_multi_shared, tardy_dp_with, DnnId, DpTable, Location,
    MultiConfig, Origin, Outcome64, ProfileSet64, Request64, RequestId, RequestState, Schedule64, Search, Split,
    TriggerEvent,
};

use crate::error::SimError;
use crate::metrics::{summarize, SummaryMetrics};
use crate::network::{transmission_delay, NetworkTrace};
use crate::offload::{
    decide_binary, decide_partial, partial_input, BinaryInput, Client, ClientProfile, OffloadMode, PartialRule,
    Placement, ServerView,
};
use crate::workload::{generate_arrivals, Arrival, WorkloadSpec};

/// Largest snapshot handed to a scheduler; older requests go first.
pub const SNAPSHOT_CAP: usize = 500;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    /// Segment DP minimising total completion time.
    #[default]
    OursTime,
    /// DP minimising late requests; predicted-late requests are dropped.
    OursTardy,
    /// Batching EDF; hopeless requests are dropped.
    Edf,
    /// Up to `B` oldest requests per batch, run to completion.
    Batch,
    /// One request at a time.
    NoBatch,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::OursTime,
        SchedulerKind::OursTardy,
        SchedulerKind::Edf,
        SchedulerKind::Batch,
        SchedulerKind::NoBatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::OursTime => "ours-time",
            SchedulerKind::OursTardy => "ours-tardy",
            SchedulerKind::Edf => "edf",
            SchedulerKind::Batch => "batch",
            SchedulerKind::NoBatch => "no-batch",
        }
    }

    /// Whether plans are revised mid-segment; the baselines only replan when
    /// their current plan is used up.
    pub fn replans_on_trigger(self) -> bool {
        matches!(self, SchedulerKind::OursTime | SchedulerKind::OursTardy | SchedulerKind::Edf)
    }

    fn drops_tardy(self) -> bool {
        matches!(self, SchedulerKind::OursTardy | SchedulerKind::Edf)
    }
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheduler `{s}` (ours-time, ours-tardy, edf, batch, no-batch)"))
    }
}

/// Size of one server step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    Layers,
    /// Every component collapsed into at most this many groups; segments
    /// may only split between runs of requests in the same group.
    Groups(usize),
}

#[derive(Clone, Debug)]
pub struct ClientSetup {
    pub count: usize,
    pub mode: OffloadMode,
    pub rule: PartialRule,
    pub profile: Arc<ClientProfile>,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub scheduler: SchedulerKind,
    /// Batch bound; the profile's largest batch when `None`.
    pub bound: Option<usize>,
    pub granularity: Granularity,
    /// Drop requests past their deadline whenever the server replans.
    pub drop_expired: bool,
    /// Batch across DNNs inside shared components.
    pub share_layers: bool,
    /// Added to every step, e.g. for batch formation and copies.
    pub step_overhead_s: f64,
    pub snapshot_cap: usize,
    /// Reuse DP rows between plans for single-DNN snapshots.
    pub incremental: bool,
    /// `None` means transfers are instantaneous.
    pub trace: Option<Arc<NetworkTrace>>,
    /// `None` means every request comes straight from the network.
    pub clients: Option<ClientSetup>,
    pub record_steps: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scheduler: SchedulerKind::OursTime,
            bound: None,
            granularity: Granularity::Layers,
            drop_expired: true,
            share_layers: true,
            step_overhead_s: 0.0,
            snapshot_cap: SNAPSHOT_CAP,
            incremental: true,
            trace: None,
            clients: None,
            record_steps: false,
        }
    }
}

impl SimConfig {
    pub fn with_scheduler(&self, scheduler: SchedulerKind) -> Self {
        SimConfig { scheduler, ..self.clone() }
    }
}

/// Generated requests plus their relative deadline.
#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub arrivals: Vec<Arrival>,
    pub deadline_s: f64,
}

impl Workload {
    pub fn generate(spec: &WorkloadSpec) -> Result<Self, SimError> {
        Ok(Workload { arrivals: generate_arrivals(spec)?, deadline_s: spec.deadline_s })
    }
}

/// One executed server step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub start: f64,
    pub end: f64,
    pub dnn: DnnId,
    /// Layer in the executed profile's numbering (a group index when grouped).
    pub layer: usize,
    pub ids: Vec<RequestId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimStats {
    pub steps: usize,
    pub replans: usize,
    pub largest_snapshot: usize,
    pub largest_batch: usize,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    /// One per generated request, by id.
    pub outcomes: Vec<Outcome64>,
    pub summary: SummaryMetrics,
    pub stats: SimStats,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    LayerComplete,
    ClientLocalComplete,
    TransmissionComplete,
    RequestArrival,
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    kind: Kind,
    id: usize,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest
    fn cmp(&self, o: &Self) -> Ordering {
        o.time.total_cmp(&self.time).then(o.kind.cmp(&self.kind)).then(o.id.cmp(&self.id)).then(o.seq.cmp(&self.seq))
    }
}

/// Per-request bookkeeping.
#[derive(Clone, Debug)]
struct Track {
    arrival: f64,
    deadline: f64,
    dnn: DnnId,
    size_bits: f64,
    client: Option<usize>,
    location: Location,
    /// Groups run locally in partial mode.
    local_groups: usize,
    network: f64,
    server_time: f64,
    client_time: f64,
    completion: Option<f64>,
    resolved: bool,
    /// Transfer in flight: bits, delay, server layer on arrival.
    transfer: (f64, f64, usize),
}

#[derive(Clone, Debug)]
struct PlanSeg {
    dnn: DnnId,
    own: Vec<RequestId>,
    /// Foreign requests and the last layer (in `dnn` numbering) they ride along.
    absorbed: Vec<(RequestId, usize)>,
    cursor: usize,
}

#[derive(Clone, Debug)]
struct Step {
    dnn: DnnId,
    layer: usize,
    ids: Vec<RequestId>,
    duration: f64,
    start: f64,
}

struct Server {
    work: ProfileSet64,
    bound: usize,
    split: Split,
    pending: BTreeMap<RequestId, Request64>,
    plan: VecDeque<PlanSeg>,
    planned: BTreeSet<RequestId>,
    plan_end: f64,
    busy: Option<Step>,
    fresh: bool,
    crossed: bool,
    tables: BTreeMap<DnnId, DpTable<f64>>,
}

impl ServerView for Server {
    fn wait_estimate(&self, _dnn: &DnnId, now: f64) -> f64 {
        let planned = (self.plan_end - now).max(0.0);
        let unplanned: f64 = self
            .pending
            .values()
            .filter(|r| !self.planned.contains(&r.id))
            .filter_map(|r| self.work.table(&r.dnn).map(|t| t.solo_runtime(r.layer)))
            .sum();
        planned + unplanned
    }
}

impl Server {
    fn position(&self, seg: &PlanSeg, id: RequestId, exit: Option<usize>) -> Option<usize> {
        let r = self.pending.get(&id)?;
        match exit {
            None => Some(r.layer),
            Some(e) => self.work.map_position(&r.dnn, r.layer, &seg.dnn).map(|p| p.0).filter(|&p| p <= e),
        }
    }

    /// Live members of a segment with their positions in its numbering.
    fn live(&self, seg: &PlanSeg) -> Vec<(RequestId, usize)> {
        let own = seg.own.iter().filter_map(|&id| self.position(seg, id, None).map(|p| (id, p)));
        let foreign = seg.absorbed.iter().filter_map(|&(id, e)| self.position(seg, id, Some(e)).map(|p| (id, p)));
        own.chain(foreign).collect()
    }

    fn schedule(
        &mut self,
        snapshot: &[Request64],
        now: f64,
        kind: SchedulerKind,
        cfg: &SimConfig,
    ) -> Result<Schedule64, SimError> {
        let dnns: BTreeSet<&DnnId> = snapshot.iter().map(|r| &r.dnn).collect();
        let bound = self.bound;
        if kind == SchedulerKind::OursTime && dnns.len() > 1 {
            let search = if dnns.len() <= layerbatch_core::multi::MAX_EXHAUSTIVE_DNNS {
                Search::Exhaustive
            } else {
                Search::ArrivalOrder
            };
            let mc = MultiConfig { bound, search, split: self.split };
            let s = if cfg.share_layers && self.work.has_shared_components() {
                schedule_multi_shared(snapshot, &self.work, &mc)?
            } else {
                schedule_multi(snapshot, &self.work, &mc)?
            };
            return Ok(s);
        }

        // one DNN after another, oldest first
        let mut by: BTreeMap<&DnnId, Vec<Request64>> = BTreeMap::new();
        for r in snapshot {
            by.entry(&r.dnn).or_default().push(r.clone());
        }
        let mut order: Vec<(&DnnId, Vec<Request64>)> = by.into_iter().collect();
        order.sort_by(|a, b| {
            let oldest = |v: &[Request64]| {
                v.iter().map(|r| (r.arrival, r.id)).fold((f64::INFINITY, RequestId(u64::MAX)), |m, x| {
                    if x.0 < m.0 || (x.0 == m.0 && x.1 < m.1) {
                        x
                    } else {
                        m
                    }
                })
            };
            let (x, y) = (oldest(&a.1), oldest(&b.1));
            x.0.total_cmp(&y.0).then(x.1.cmp(&y.1))
        });
        let mut out = Schedule64::empty();
        let mut offset = 0.0;
        for (dnn, rs) in order {
            let table = self.work.table(dnn).ok_or_else(|| SimError::UnknownDnn(dnn.clone()))?;
            let at = now + offset;
            let s = match kind {
                SchedulerKind::OursTime => match self.split {
                    Split::LayerUnit => compute_schedule_layer_units(&rs, table, bound)?,
                    Split::Request if cfg.incremental => {
                        self.tables.entry(dnn.clone()).or_default().update(&rs, table, bound)?
                    }
                    Split::Request => compute_schedule(&rs, table, bound)?,
                },
                SchedulerKind::OursTardy => tardy_dp_with(&rs, table, bound, at, self.split)?,
                SchedulerKind::Edf => edf_batch(&rs, table, bound, at)?,
                SchedulerKind::Batch => baseline_batch(&rs, table, bound),
                SchedulerKind::NoBatch => baseline_no_batch(&rs, table),
            };
            let span = s.makespan();
            for mut seg in s.segments {
                seg.finish_offset += offset;
                out.segments.push(seg);
            }
            for (id, c) in s.predicted_completion {
                out.predicted_completion.insert(id, c + offset);
                out.objective += c + offset;
            }
            out.tardy.extend(s.tardy);
            offset += span;
        }
        Ok(out)
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    orig: &'a ProfileSet64,
    now: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    tracks: Vec<Track>,
    clients: Vec<Client>,
    server: Server,
    /// `(dnn, component)` → groups used when collapsing it.
    comp_groups: BTreeMap<(DnnId, usize), layerbatch_core::LayerGroups>,
    stats: SimStats,
    steps: Vec<StepRecord>,
}

impl<'a> Sim<'a> {
    fn push(&mut self, time: f64, kind: Kind, id: usize) {
        self.seq += 1;
        self.events.push(Event { time, kind, id, seq: self.seq });
    }

    fn trace_delay(&self, bits: f64, start: f64) -> f64 {
        self.cfg.trace.as_ref().map_or(0.0, |t| transmission_delay(bits, start, t))
    }

    fn fallback_bps(&self, at: f64) -> f64 {
        self.cfg.trace.as_ref().map_or(f64::INFINITY, |t| t.throughput_at(at))
    }

    /// Layer in the executed profile for original `layer` of `dnn`.
    fn to_work(&self, dnn: &DnnId, layer: usize) -> usize {
        let Granularity::Groups(_) = self.cfg.granularity else { return layer };
        let d = self.orig.dnn(dnn).expect("validated dnn");
        let w = self.server.work.dnn(dnn).expect("validated dnn");
        let s = d.stage_of(layer).expect("layer inside dnn");
        let g = &self.comp_groups[&(dnn.clone(), s)];
        w.stages[s].first_layer + g.group_of(layer - d.stages[s].first_layer + 1) - 1
    }

    fn resolve(&mut self, i: usize, completion: Option<f64>) {
        let t = &mut self.tracks[i];
        debug_assert!(!t.resolved, "request {i} resolved twice");
        t.completion = completion;
        t.resolved = true;
    }

    fn send(&mut self, i: usize, bits: f64, server_layer: usize, extra: f64) {
        let delay = self.trace_delay(bits, self.now);
        let t = &mut self.tracks[i];
        t.network += delay;
        t.transfer = (bits, delay, server_layer);
        self.push(self.now + delay + extra, Kind::TransmissionComplete, i);
    }

    fn on_generated(&mut self, i: usize) -> Result<(), SimError> {
        let Some(setup) = self.cfg.clients.clone() else {
            let bits = self.tracks[i].size_bits;
            self.send(i, bits, 1, 0.0);
            return Ok(());
        };
        let c = i % setup.count.max(1);
        self.tracks[i].client = Some(c);
        let dnn = self.tracks[i].dnn.clone();
        let size = self.tracks[i].size_bits;
        if setup.mode == OffloadMode::None {
            self.send(i, size, 1, 0.0);
            return Ok(());
        }
        let model =
            setup.profile.dnns.get(&dnn).ok_or_else(|| SimError::Client(format!("no client profile for `{dnn}`")))?;
        let fallback = self.fallback_bps(self.now);
        let wait = self.server.wait_estimate(&dnn, self.now);
        match setup.mode {
            OffloadMode::Binary => {
                let x = BinaryInput {
                    now: self.now,
                    deadline: self.tracks[i].deadline,
                    local_backlog: self.clients[c].backlog(self.now),
                    local_runtime: model.full,
                    tx_estimate: self.clients[c].estimator.delay(size, fallback),
                    server_estimate: wait + model.server_rest[0],
                };
                if decide_binary(&x) == Placement::Local {
                    let end = self.clients[c].enqueue(self.now, model.full);
                    let t = &mut self.tracks[i];
                    t.location = Location::ClientFull;
                    t.client_time = model.full;
                    self.push(end, Kind::ClientLocalComplete, i);
                } else {
                    self.send(i, size, 1, 0.0);
                }
            }
            OffloadMode::Partial => {
                let x = partial_input(
                    &self.clients[c],
                    model,
                    size,
                    wait,
                    self.now,
                    fallback,
                    setup.profile.compress,
                    setup.profile.decompress,
                );
                let g = model.num_groups();
                let k = decide_partial(&x, setup.rule);
                if k == 0 {
                    self.send(i, size, 1, 0.0);
                    return Ok(());
                }
                let work = model.local_prefix(k) + if k < g { setup.profile.compress } else { 0.0 };
                let end = self.clients[c].enqueue(self.now, work);
                let t = &mut self.tracks[i];
                t.location = if k == g { Location::ClientFull } else { Location::ClientPartial(k) };
                t.local_groups = k;
                t.client_time = work;
                self.push(end, Kind::ClientLocalComplete, i);
            }
            OffloadMode::None => unreachable!(),
        }
        Ok(())
    }

    fn on_local_complete(&mut self, i: usize) {
        let k = self.tracks[i].local_groups;
        if self.tracks[i].location == Location::ClientFull {
            self.resolve(i, Some(self.now));
            return;
        }
        let setup = self.cfg.clients.as_ref().expect("partial run has clients");
        let dnn = self.tracks[i].dnn.clone();
        let model = &setup.profile.dnns[&dnn];
        let bits = model.payload_bits[k - 1];
        let layer = self.to_work(&dnn, model.groups.first_layer(k + 1));
        let decompress = setup.profile.decompress;
        self.send(i, bits, layer, decompress);
    }

    fn on_transferred(&mut self, i: usize) {
        let (bits, delay, layer) = self.tracks[i].transfer;
        let t = &self.tracks[i];
        if let Some(c) = t.client {
            if delay > 0.0 {
                self.clients[c].estimator.observe(bits / delay);
            }
        }
        let origin = t.client.map_or(Origin::RemoteTrace, Origin::Client);
        let r = Request64::new(i as u64, t.dnn.clone(), t.arrival, t.deadline).at_layer(layer).with_origin(origin);
        self.server.pending.insert(r.id, r);
        self.server.fresh = true;
    }

    fn on_step_complete(&mut self) {
        let step = self.server.busy.take().expect("a step was running");
        for &id in &step.ids {
            let r = self.server.pending.get_mut(&id).expect("batched request pending");
            r.layer += 1;
            let n = self.server.work.table(&r.dnn).expect("validated dnn").num_layers();
            let done = r.layer > n;
            if done {
                let _ = r.transition(RequestState::Completed);
                self.server.pending.remove(&id);
            }
            let i = id.0 as usize;
            self.tracks[i].server_time += step.duration;
            if done {
                self.resolve(i, Some(self.now));
            }
        }
        if let Some(seg) = self.server.plan.front_mut() {
            seg.cursor = step.layer + 1;
        }
        let n = self.server.work.table(&step.dnn).map_or(0, |t| t.num_layers());
        if step.layer < n
            && self.server.work.in_shared_stage(&step.dnn, step.layer)
                != self.server.work.in_shared_stage(&step.dnn, step.layer + 1)
        {
            self.server.crossed = true;
        }
        if self.cfg.record_steps {
            self.steps.push(StepRecord {
                start: step.start,
                end: self.now,
                dnn: step.dnn,
                layer: step.layer,
                ids: step.ids,
            });
        }
    }

    fn drop_ids(&mut self, ids: impl IntoIterator<Item = RequestId>) {
        for id in ids {
            if self.server.pending.remove(&id).is_some() {
                self.resolve(id.0 as usize, None);
            }
        }
    }

    fn replan(&mut self) -> Result<(), SimError> {
        let now = self.now;
        if self.cfg.drop_expired {
            let all: Vec<Request64> = self.server.pending.values().cloned().collect();
            let (_, dropped) = drop_expired(all, now);
            self.drop_ids(dropped.into_iter().map(|r| r.id));
        }
        let mut snapshot: Vec<Request64> = self.server.pending.values().cloned().collect();
        layerbatch_core::model::sort_by_arrival(&mut snapshot);
        snapshot.truncate(self.cfg.snapshot_cap);
        self.stats.largest_snapshot = self.stats.largest_snapshot.max(snapshot.len());
        self.stats.replans += 1;

        let kind = self.cfg.scheduler;
        let s = self.server.schedule(&snapshot, now, kind, self.cfg)?;
        let tardy: BTreeSet<RequestId> =
            if kind.drops_tardy() { s.tardy.iter().copied().collect() } else { BTreeSet::new() };
        self.drop_ids(tardy.iter().copied());

        self.server.plan.clear();
        self.server.planned.clear();
        for seg in &s.segments {
            let own: Vec<RequestId> = seg.members.iter().copied().filter(|id| !tardy.contains(id)).collect();
            let absorbed = seg
                .absorbed
                .iter()
                .filter(|id| !tardy.contains(id))
                .filter_map(|id| {
                    let r = self.server.pending.get(id)?;
                    let (_, end) = self.server.work.map_position(&r.dnn, r.layer, &seg.dnn)?;
                    Some((*id, end))
                })
                .collect::<Vec<_>>();
            self.server.planned.extend(own.iter().copied());
            self.server.planned.extend(absorbed.iter().map(|a| a.0));
            self.server.plan.push_back(PlanSeg { dnn: seg.dnn.clone(), own, absorbed, cursor: seg.start_layer });
        }
        self.server.plan_end = now + s.makespan();
        self.server.fresh = false;
        self.server.crossed = false;
        Ok(())
    }

    fn start_step(&mut self) -> Result<(), SimError> {
        while let Some(seg) = self.server.plan.front() {
            let live = self.server.live(seg);
            if live.is_empty() {
                self.server.plan.pop_front();
                continue;
            }
            let at = if live.iter().any(|&(_, p)| p == seg.cursor) {
                seg.cursor
            } else {
                live.iter().map(|&(_, p)| p).min().expect("non-empty")
            };
            let ids: Vec<RequestId> = live.iter().filter(|&&(_, p)| p == at).map(|&(id, _)| id).collect();
            let dnn = seg.dnn.clone();
            if ids.len() > self.server.bound {
                return Err(SimError::BatchOverflow { dnn, layer: at, batch: ids.len(), bound: self.server.bound });
            }
            let table = self.server.work.table(&dnn).ok_or_else(|| SimError::UnknownDnn(dnn.clone()))?;
            let h = table.lookup(at, ids.len()).ok_or(SimError::BatchOverflow {
                dnn: dnn.clone(),
                layer: at,
                batch: ids.len(),
                bound: table.max_batch(),
            })?;
            let duration = h + self.cfg.step_overhead_s;
            for id in &ids {
                let r = self.server.pending.get_mut(id).ok_or(SimError::NotPending(*id))?;
                if r.state == RequestState::Pending {
                    let _ = r.transition(RequestState::Running);
                }
            }
            self.server.plan.front_mut().expect("front exists").cursor = at;
            self.stats.steps += 1;
            self.stats.largest_batch = self.stats.largest_batch.max(ids.len());
            self.server.busy = Some(Step { dnn, layer: at, ids, duration, start: self.now });
            self.push(self.now + duration, Kind::LayerComplete, 0);
            return Ok(());
        }
        Ok(())
    }

    fn dispatch(&mut self) -> Result<(), SimError> {
        if self.server.busy.is_some() || self.server.pending.is_empty() {
            return Ok(());
        }
        while self.server.plan.front().is_some_and(|s| self.server.live(s).is_empty()) {
            self.server.plan.pop_front();
        }
        let trigger = TriggerEvent {
            layer_completed: true,
            arrivals_pending: self.server.fresh,
            crossed_shared_boundary: self.server.crossed,
        };
        let replan =
            self.server.plan.is_empty() || (self.cfg.scheduler.replans_on_trigger() && reschedule_trigger(&trigger));
        if replan {
            self.replan()?;
        }
        self.start_step()?;
        // a plan made only of dropped requests leaves the server idle; every
        // replan either drops requests or yields a step, so this ends
        while self.server.busy.is_none() && !self.server.pending.is_empty() {
            self.replan()?;
            self.start_step()?;
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(first) = self.events.pop() {
            self.now = first.time;
            let mut batch = vec![first];
            while self.events.peek().is_some_and(|e| e.time == first.time) {
                batch.push(self.events.pop().expect("peeked"));
            }
            for ev in batch {
                match ev.kind {
                    Kind::LayerComplete => self.on_step_complete(),
                    Kind::ClientLocalComplete => self.on_local_complete(ev.id),
                    Kind::TransmissionComplete => self.on_transferred(ev.id),
                    Kind::RequestArrival => self.on_generated(ev.id)?,
                }
            }
            self.dispatch()?;
        }
        Ok(())
    }
}

/// Layer groups of each `(dnn, stage)` when running grouped.
type GroupMap = BTreeMap<(DnnId, usize), layerbatch_core::LayerGroups>;

fn working_profiles(
    profiles: &ProfileSet64,
    granularity: Granularity,
) -> Result<(ProfileSet64, GroupMap), SimError> {
    let Granularity::Groups(g) = granularity else {
        return Ok((profiles.clone(), BTreeMap::new()));
    };
    let work = profiles.grouped(g)?;
    let mut groups = BTreeMap::new();
    for d in profiles.dnns() {
        for (s, st) in d.stages.iter().enumerate() {
            let comp = profiles.component(&st.component).expect("validated component");
            let solo = comp.cost.solo_layers();
            groups.insert((d.id.clone(), s), group_layers(&solo, g.min(solo.len()))?);
        }
    }
    Ok((work, groups))
}

/// Runs `workload` to completion: every request ends completed or dropped.
pub fn run_sim(workload: &Workload, profiles: &ProfileSet64, cfg: &SimConfig) -> Result<SimResult, SimError> {
    for a in &workload.arrivals {
        if profiles.dnn(&a.dnn).is_none() {
            return Err(SimError::UnknownDnn(a.dnn.clone()));
        }
    }
    if let Some(c) = &cfg.clients {
        if c.count == 0 {
            return Err(SimError::Client("client count must be at least 1".into()));
        }
    }
    let (work, comp_groups) = working_profiles(profiles, cfg.granularity)?;
    let bound = cfg.bound.unwrap_or(profiles.max_batch()).min(profiles.max_batch());
    let split = match cfg.granularity {
        Granularity::Layers => Split::Request,
        Granularity::Groups(_) => Split::LayerUnit,
    };
    let tracks = workload
        .arrivals
        .iter()
        .enumerate()
        .map(|(i, a)| {
            debug_assert_eq!(a.id, i as u64, "arrival ids are their indices");
            Track {
                arrival: a.time,
                deadline: a.time + workload.deadline_s,
                dnn: a.dnn.clone(),
                size_bits: a.size_bits,
                client: None,
                location: Location::Server,
                local_groups: 0,
                network: 0.0,
                server_time: 0.0,
                client_time: 0.0,
                completion: None,
                resolved: false,
                transfer: (0.0, 0.0, 1),
            }
        })
        .collect();
    let mut sim = Sim {
        cfg,
        orig: profiles,
        now: 0.0,
        seq: 0,
        events: BinaryHeap::new(),
        tracks,
        clients: vec![Client::default(); cfg.clients.as_ref().map_or(0, |c| c.count)],
        server: Server {
            work,
            bound,
            split,
            pending: BTreeMap::new(),
            plan: VecDeque::new(),
            planned: BTreeSet::new(),
            plan_end: 0.0,
            busy: None,
            fresh: false,
            crossed: false,
            tables: BTreeMap::new(),
        },
        comp_groups,
        stats: SimStats::default(),
        steps: Vec::new(),
    };
    for (i, a) in workload.arrivals.iter().enumerate() {
        sim.push(a.time, Kind::RequestArrival, i);
    }
    sim.run()?;

    let outcomes: Vec<Outcome64> = sim
        .tracks
        .iter()
        .zip(&workload.arrivals)
        .map(|(t, a)| Outcome64 {
            id: RequestId(a.id),
            dnn: t.dnn.clone(),
            arrival: t.arrival,
            deadline: t.deadline,
            completion: t.completion,
            on_time: t.completion.is_some_and(|c| c <= t.deadline),
            location: t.location,
            network_delay: t.network,
            server_time: t.server_time,
            client_time: t.client_time,
        })
        .collect();
    let summary = summarize(&outcomes, None);
    Ok(SimResult { outcomes, summary, stats: sim.stats, steps: sim.steps })
}

/// [`run_sim`] on a freshly generated workload.
pub fn simulate(spec: &WorkloadSpec, profiles: &ProfileSet64, cfg: &SimConfig) -> Result<SimResult, SimError> {
    run_sim(&Workload::generate(spec)?, profiles, cfg)
}
