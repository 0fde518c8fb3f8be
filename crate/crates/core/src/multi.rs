//! Scheduling requests of several DNNs, optionally batching across DNNs in
//! shared components.
//!
//! A plan runs every request of one DNN before the next DNN starts. Each
//! DNN's segmentation is optimal for its slot: its DP charges every segment
//! for the requests of the DNNs still waiting behind it.

use std::collections::BTreeMap;

use itertools::Itertools;

use crate::batch::{assemble, infeasible};
use crate::error::SchedError;
use crate::model::{arrival_order, DnnId, Request, RequestId, Schedule};
use crate::profile::ProfileSet;
use crate::scalar::Scalar;
use crate::sweep::{self, Item, Split};

/// Largest DNN count searched over all permutations.
pub const MAX_EXHAUSTIVE_DNNS: usize = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Search {
    /// Every model-wise permutation; at most [`MAX_EXHAUSTIVE_DNNS`] DNNs.
    #[default]
    Exhaustive,
    /// One permutation: DNNs ordered by their oldest pending request.
    ArrivalOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiConfig {
    pub bound: usize,
    pub search: Search,
    pub split: Split,
}

impl MultiConfig {
    pub fn new(bound: usize) -> Self {
        MultiConfig { bound, search: Search::Exhaustive, split: Split::Request }
    }
}

#[derive(Clone, Debug)]
struct Pos<T> {
    dnn: DnnId,
    arrival: T,
    layer: usize,
}

fn group_by_dnn<T: Scalar>(
    requests: &[Request<T>],
    profiles: &ProfileSet<T>,
) -> Result<BTreeMap<DnnId, Vec<Request<T>>>, SchedError> {
    let mut by: BTreeMap<DnnId, Vec<Request<T>>> = BTreeMap::new();
    for r in requests {
        let table = profiles.table(&r.dnn).ok_or_else(|| SchedError::UnknownDnn(r.dnn.clone()))?;
        if r.layer == 0 || r.layer > table.num_layers() {
            return Err(SchedError::LayerOutOfRange { id: r.id, layer: r.layer, max: table.num_layers() });
        }
        by.entry(r.dnn.clone()).or_default().push(r.clone());
    }
    for v in by.values_mut() {
        v.sort_by(arrival_order);
    }
    Ok(by)
}

fn orders<T: Scalar>(by: &BTreeMap<DnnId, Vec<Request<T>>>, search: Search) -> Result<Vec<Vec<DnnId>>, SchedError> {
    let dnns: Vec<DnnId> = by.keys().cloned().collect();
    match search {
        Search::Exhaustive => {
            if dnns.len() > MAX_EXHAUSTIVE_DNNS {
                return Err(SchedError::TooManyDnns { count: dnns.len(), max: MAX_EXHAUSTIVE_DNNS });
            }
            let k = dnns.len();
            Ok(dnns.into_iter().permutations(k).collect())
        }
        Search::ArrivalOrder => {
            let mut d = dnns;
            d.sort_by(|a, b| arrival_order(&by[a][0], &by[b][0]));
            Ok(vec![d])
        }
    }
}

/// One DNN's slot: schedule `items` (own requests and possibly absorbed
/// foreign ones) with `waiting` requests outstanding in total.
fn slot<T: Scalar>(
    dnn: &DnnId,
    ids: &[RequestId],
    owner: &[bool],
    items: &[Item],
    waiting: usize,
    profiles: &ProfileSet<T>,
    cfg: &MultiConfig,
    offset: T,
) -> Option<(T, Schedule<T>)> {
    let table = profiles.table(dnn)?;
    let cuts = sweep::cuts_for(cfg.split, items, cfg.bound);
    let rows = sweep::build_rows(items, &cuts, table, cfg.bound);
    let sol = sweep::solve(items, &cuts, &rows, waiting)?;
    let s = assemble(dnn, ids, owner, items, &sol.segments, table, cfg.bound, offset);
    Some((sol.objective, s))
}

fn append<T: Scalar>(acc: &mut Schedule<T>, part: Schedule<T>) {
    acc.segments.extend(part.segments);
    acc.predicted_completion.extend(part.predicted_completion);
}

/// Plan for one permutation without cross-DNN batching.
fn plan_plain<T: Scalar>(
    order: &[DnnId],
    by: &BTreeMap<DnnId, Vec<Request<T>>>,
    profiles: &ProfileSet<T>,
    cfg: &MultiConfig,
) -> Option<Schedule<T>> {
    let mut waiting: usize = order.iter().map(|d| by[d].len()).sum();
    let mut out = Schedule::empty();
    let mut offset = T::zero();
    for d in order {
        let n = profiles.table(d)?.num_layers();
        let rs = &by[d];
        let items: Vec<Item> = rs.iter().map(|r| Item::native(r.layer, n)).collect();
        let ids: Vec<RequestId> = rs.iter().map(|r| r.id).collect();
        let (obj, part) = slot(d, &ids, &vec![true; ids.len()], &items, waiting, profiles, cfg, offset)?;
        out.objective = out.objective + obj;
        offset = part.makespan().max_of(offset);
        append(&mut out, part);
        waiting -= rs.len();
    }
    Some(out)
}

/// Plan for one permutation where each DNN's slot also sweeps up requests of
/// DNNs later in the order that sit in a component it shares. Absorbed
/// requests ride along to the end of that component.
fn plan_shared<T: Scalar>(
    order: &[DnnId],
    by: &BTreeMap<DnnId, Vec<Request<T>>>,
    profiles: &ProfileSet<T>,
    cfg: &MultiConfig,
) -> Option<Schedule<T>> {
    let mut pos: BTreeMap<RequestId, Pos<T>> = BTreeMap::new();
    for rs in by.values() {
        for r in rs {
            pos.insert(r.id, Pos { dnn: r.dnn.clone(), arrival: r.arrival, layer: r.layer });
        }
    }
    let mut out = Schedule::empty();
    let mut offset = T::zero();
    let mut absorbed_any = false;
    for (slot_idx, d) in order.iter().enumerate() {
        let later = &order[slot_idx + 1..];
        let table = profiles.table(d)?;
        let n = table.num_layers();
        // (arrival, id, item, owner)
        let mut entries: Vec<(T, RequestId, Item, bool)> = Vec::new();
        for (id, p) in &pos {
            if &p.dnn == d {
                entries.push((p.arrival, *id, Item::native(p.layer, n), true));
            } else if later.contains(&p.dnn) {
                if let Some((at, stage_end)) = profiles.map_position(&p.dnn, p.layer, d) {
                    let own_end = profiles.map_position(d, stage_end, &p.dnn).map(|x| x.1)?;
                    let completes = own_end == profiles.table(&p.dnn)?.num_layers();
                    entries.push((p.arrival, *id, Item { start: at, exit: stage_end, completes }, false));
                }
            }
        }
        if entries.is_empty() {
            continue;
        }
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let waiting = pos.values().filter(|p| &p.dnn == d || later.contains(&p.dnn)).count();
        let ids: Vec<RequestId> = entries.iter().map(|e| e.1).collect();
        let items: Vec<Item> = entries.iter().map(|e| e.2).collect();
        let owner: Vec<bool> = entries.iter().map(|e| e.3).collect();
        absorbed_any |= owner.iter().any(|o| !o);
        let (obj, part) = slot(d, &ids, &owner, &items, waiting, profiles, cfg, offset)?;
        out.objective = out.objective + obj;
        offset = part.makespan().max_of(offset);
        for (i, id) in ids.iter().enumerate() {
            if owner[i] || items[i].completes {
                pos.remove(id);
            } else {
                let p = pos.get_mut(id).unwrap();
                let (_, own_end) = profiles.map_position(d, items[i].exit, &p.dnn)?;
                p.layer = own_end + 1;
            }
        }
        append(&mut out, part);
    }
    if !absorbed_any {
        return None;
    }
    Some(out)
}

fn best<T: Scalar>(cands: impl Iterator<Item = Schedule<T>>) -> Option<Schedule<T>> {
    let mut best: Option<Schedule<T>> = None;
    for c in cands {
        if best.as_ref().is_none_or(|b| c.objective < b.objective) {
            best = Some(c);
        }
    }
    best
}

fn finish<T: Scalar>(mut s: Schedule<T>) -> Schedule<T> {
    s.tardy.clear();
    s
}

/// Best model-wise permutation of per-DNN optimal segmentations.
pub fn schedule_multi<T: Scalar>(
    requests: &[Request<T>],
    profiles: &ProfileSet<T>,
    cfg: &MultiConfig,
) -> Result<Schedule<T>, SchedError> {
    let by = group_by_dnn(requests, profiles)?;
    if by.is_empty() {
        return Ok(Schedule::empty());
    }
    let orders = orders(&by, cfg.search)?;
    best(orders.iter().filter_map(|o| plan_plain(o, &by, profiles, cfg)))
        .map(finish)
        .ok_or_else(|| no_plan(requests, cfg.bound))
}

/// [`schedule_multi`] with cross-DNN batching in shared components. For each
/// permutation the cheaper of the sharing and non-sharing plans is kept, so
/// the result is never worse than [`schedule_multi`].
pub fn schedule_multi_shared<T: Scalar>(
    requests: &[Request<T>],
    profiles: &ProfileSet<T>,
    cfg: &MultiConfig,
) -> Result<Schedule<T>, SchedError> {
    let by = group_by_dnn(requests, profiles)?;
    if by.is_empty() {
        return Ok(Schedule::empty());
    }
    let orders = orders(&by, cfg.search)?;
    let cands = orders.iter().filter_map(|o| {
        let plain = plan_plain(o, &by, profiles, cfg);
        let shared = if profiles.has_shared_components() { plan_shared(o, &by, profiles, cfg) } else { None };
        match (plain, shared) {
            (Some(p), Some(s)) => Some(if s.objective < p.objective { s } else { p }),
            (p, s) => p.or(s),
        }
    });
    best(cands).map(finish).ok_or_else(|| no_plan(requests, cfg.bound))
}

fn no_plan<T: Scalar>(requests: &[Request<T>], bound: usize) -> SchedError {
    let refs: Vec<&Request<T>> = requests.iter().collect();
    infeasible(&refs, bound)
}

/// What happened since the last scheduling decision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TriggerEvent {
    pub layer_completed: bool,
    pub arrivals_pending: bool,
    pub crossed_shared_boundary: bool,
}

/// Re-schedule after a layer completes with new arrivals waiting, or when a
/// batch crosses between shared and private layers.
pub fn reschedule_trigger(event: &TriggerEvent) -> bool {
    (event.layer_completed && event.arrivals_pending) || event.crossed_shared_boundary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::compute_schedule;
    use crate::profile::{ComponentId, CostTable, SharedComponent};

    fn comp(id: &str, n: usize, solo: f64, pair: f64) -> SharedComponent<f64> {
        SharedComponent {
            id: ComponentId::from(id),
            layer_names: vec![String::new(); n],
            cost: CostTable::from_fn(n, 16, |_, b| if b == 1 { solo } else { pair + (b as f64 - 2.0) }),
            output_bits: vec![0.0; n],
        }
    }

    fn req(id: u64, dnn: &str, arrival: f64, layer: usize) -> Request<f64> {
        Request::new(id, dnn, arrival, arrival + 1e6).at_layer(layer)
    }

    fn pair() -> ProfileSet<f64> {
        ProfileSet::from_parts(
            16,
            vec![comp("flow", 3, 10.0, 12.0), comp("sdc", 2, 4.0, 5.0), comp("rta", 2, 4.0, 5.0)],
            vec![("sdcnet", vec!["flow", "sdc"]), ("rta", vec!["flow", "rta"])],
        )
        .unwrap()
    }

    #[test]
    fn one_dnn_matches_single_dp() {
        let p = pair();
        let rs = [req(1, "rta", 0.0, 3), req(2, "rta", 1.0, 1), req(3, "rta", 2.0, 1)];
        let m = schedule_multi(&rs, &p, &MultiConfig::new(16)).unwrap();
        let s = compute_schedule(&rs, p.table(&DnnId::from("rta")).unwrap(), 16).unwrap();
        assert_eq!(m.objective, s.objective);
        assert_eq!(m.segment_ids(), s.segment_ids());
    }

    #[test]
    fn nearly_done_dnn_goes_first() {
        let p = pair();
        let rs = [req(1, "sdcnet", 0.0, 1), req(2, "sdcnet", 0.5, 1), req(3, "rta", 1.0, 5), req(4, "rta", 2.0, 5)];
        let m = schedule_multi(&rs, &p, &MultiConfig::new(16)).unwrap();
        assert_eq!(m.segments[0].dnn, DnnId::from("rta"));
    }

    #[test]
    fn sharing_beats_separate_prefix_runs() {
        let p = pair();
        let rs = [req(1, "sdcnet", 0.0, 1), req(2, "rta", 0.5, 1), req(3, "sdcnet", 1.0, 1), req(4, "rta", 2.0, 1)];
        let cfg = MultiConfig::new(16);
        let plain = schedule_multi(&rs, &p, &cfg).unwrap();
        let shared = schedule_multi_shared(&rs, &p, &cfg).unwrap();
        assert!(shared.objective < plain.objective);
        assert!(shared.segments.iter().any(|s| !s.absorbed.is_empty()));
        assert_eq!(shared.predicted_completion.len(), 4);
    }

    #[test]
    fn without_shared_components_outputs_match() {
        let p = ProfileSet::from_parts(
            16,
            vec![comp("a", 2, 10.0, 12.0), comp("b", 3, 5.0, 6.0)],
            vec![("x", vec!["a"]), ("y", vec!["b"])],
        )
        .unwrap();
        let rs = [req(1, "x", 0.0, 1), req(2, "y", 0.5, 2), req(3, "x", 1.0, 1)];
        let cfg = MultiConfig::new(16);
        assert_eq!(schedule_multi(&rs, &p, &cfg).unwrap(), schedule_multi_shared(&rs, &p, &cfg).unwrap());
    }

    #[test]
    fn guard_on_dnn_count() {
        let comps: Vec<_> = (0..7).map(|i| comp(&format!("c{i}"), 1, 1.0, 1.5)).collect();
        let names: Vec<String> = (0..7).map(|i| format!("d{i}")).collect();
        let cids: Vec<String> = (0..7).map(|i| format!("c{i}")).collect();
        let dnns = names.iter().zip(&cids).map(|(d, c)| (d.as_str(), vec![c.as_str()])).collect();
        let p = ProfileSet::from_parts(16, comps, dnns).unwrap();
        let rs: Vec<_> = (0..7).map(|i| req(i, &format!("d{i}"), i as f64, 1)).collect();
        let err = schedule_multi(&rs, &p, &MultiConfig::new(16)).unwrap_err();
        assert_eq!(err, SchedError::TooManyDnns { count: 7, max: 6 });
        let cfg = MultiConfig { search: Search::ArrivalOrder, ..MultiConfig::new(16) };
        let s = schedule_multi(&rs, &p, &cfg).unwrap();
        assert_eq!(s.segments[0].dnn, DnnId::from("d0"));
    }

    #[test]
    fn trigger_rules() {
        let done = TriggerEvent { layer_completed: true, ..Default::default() };
        assert!(!reschedule_trigger(&done));
        assert!(reschedule_trigger(&TriggerEvent { arrivals_pending: true, ..done }));
        assert!(reschedule_trigger(&TriggerEvent { crossed_shared_boundary: true, ..Default::default() }));
    }
}
