//! Total-completion-time scheduling for one DNN and the two baselines.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::error::SchedError;
use crate::model::{arrival_order, Request, RequestId, Schedule, Segment};
use crate::profile::{CostTable, LayerGroups};
use crate::scalar::Scalar;
use crate::sweep::{self, Counter, Item, Row};

/// Result of sweeping one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSweep<T> {
    pub duration: T,
    pub max_batch: usize,
    /// Batch size at each layer `1..=N`; zero before the sweep starts.
    pub batch_sizes: Vec<usize>,
}

/// Sweeps `requests` (one segment) from the shallowest member to the last
/// layer. `None` when a layer's batch exceeds `bound`.
pub fn segment_duration<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
) -> Option<SegmentSweep<T>> {
    let n = table.num_layers();
    let mut c = Counter::new(table, bound);
    for r in requests {
        c.add(&Item::native(r.layer, n));
    }
    let e = c.eval()?;
    Some(SegmentSweep { duration: e.duration, max_batch: e.max_batch, batch_sizes: c.batch_sizes() })
}

/// `active(j) · duration(j..i)` for the 1-based, arrival-ordered range `j..=i`
/// of a snapshot, with `active(j) = |R| − j + 1`.
pub fn cost<T: Scalar>(requests: &[Request<T>], i: usize, j: usize, table: &CostTable<T>, bound: usize) -> Option<T> {
    assert!(1 <= j && j <= i && i <= requests.len(), "need 1 ≤ j ≤ i ≤ |R|");
    let mut sorted: Vec<&Request<T>> = requests.iter().collect();
    sorted.sort_by(|a, b| arrival_order(a, b));
    let seg: Vec<Request<T>> = sorted[j - 1..i].iter().map(|r| (*r).clone()).collect();
    let sweep = segment_duration(&seg, table, bound)?;
    Some(T::from_usize(requests.len() - j + 1) * sweep.duration)
}

pub(crate) fn sorted_snapshot<T: Scalar>(
    requests: &[Request<T>],
    layers: usize,
) -> Result<Vec<&Request<T>>, SchedError> {
    for r in requests {
        if r.layer == 0 || r.layer > layers {
            return Err(SchedError::LayerOutOfRange { id: r.id, layer: r.layer, max: layers });
        }
    }
    let mut sorted: Vec<&Request<T>> = requests.iter().collect();
    sorted.sort_by(|a, b| arrival_order(a, b));
    Ok(sorted)
}

pub(crate) fn infeasible<T: Scalar>(sorted: &[&Request<T>], bound: usize) -> SchedError {
    let mut per_layer: BTreeMap<usize, usize> = BTreeMap::new();
    for r in sorted {
        *per_layer.entry(r.layer).or_default() += 1;
    }
    let (layer, count) = per_layer.into_iter().max_by_key(|&(l, c)| (c, std::cmp::Reverse(l))).unwrap_or((1, 0));
    SchedError::Infeasible { layer, count, bound }
}

/// Turns chosen `[a, b)` item ranges into a schedule.
///
/// `ids[i]` names item `i`; `owner[i]` is true for items of the scheduled DNN
/// and false for absorbed foreign requests.
pub(crate) fn assemble<T: Scalar>(
    dnn: &crate::model::DnnId,
    ids: &[RequestId],
    owner: &[bool],
    items: &[Item],
    segments: &[(usize, usize)],
    table: &CostTable<T>,
    bound: usize,
    start_offset: T,
) -> Schedule<T> {
    let mut out = Schedule::empty();
    let mut elapsed = start_offset;
    for &(a, b) in segments {
        let mut c = Counter::new(table, bound);
        for it in &items[a..b] {
            c.add(it);
        }
        let e = c.eval().expect("chosen segments are feasible");
        let finish = elapsed + e.duration;
        let hi = items[a..b].iter().map(|it| it.exit).max().unwrap_or(0);
        for i in a..b {
            let it = items[i];
            if it.completes {
                let at = if it.exit == hi { finish } else { elapsed + c.offset_at(it.exit) };
                out.predicted_completion.insert(ids[i], at);
                out.objective = out.objective + at;
            }
        }
        out.segments.push(Segment {
            dnn: dnn.clone(),
            members: (a..b).filter(|&i| owner[i]).map(|i| ids[i]).collect(),
            absorbed: (a..b).filter(|&i| !owner[i]).map(|i| ids[i]).collect(),
            start_layer: items[a..b].iter().map(|it| it.start).min().unwrap_or(1),
            max_batch: e.max_batch,
            duration: e.duration,
            finish_offset: finish,
        });
        elapsed = finish;
    }
    out
}

fn native_items<T: Scalar>(sorted: &[&Request<T>], layers: usize) -> Vec<Item> {
    sorted.iter().map(|r| Item::native(r.layer, layers)).collect()
}

fn dnn_of<T: Scalar>(sorted: &[&Request<T>]) -> crate::model::DnnId {
    sorted.first().map(|r| r.dnn.clone()).unwrap_or_else(|| crate::model::DnnId::from(""))
}

fn run_dp<T: Scalar>(
    sorted: &[&Request<T>],
    items: &[Item],
    cuts: &[usize],
    rows: &[Row<T>],
    table: &CostTable<T>,
    bound: usize,
) -> Result<Schedule<T>, SchedError> {
    if sorted.is_empty() {
        return Ok(Schedule::empty());
    }
    let sol = sweep::solve(items, cuts, rows, items.len()).ok_or_else(|| infeasible(sorted, bound))?;
    let ids: Vec<RequestId> = sorted.iter().map(|r| r.id).collect();
    let mut s = assemble(&dnn_of(sorted), &ids, &vec![true; ids.len()], items, &sol.segments, table, bound, T::zero());
    s.objective = sol.objective;
    Ok(s)
}

/// Optimal segmentation minimising total completion time.
pub fn compute_schedule<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
) -> Result<Schedule<T>, SchedError> {
    let sorted = sorted_snapshot(requests, table.num_layers())?;
    let items = native_items(&sorted, table.num_layers());
    let cuts = sweep::all_cuts(items.len());
    let rows = sweep::build_rows(&items, &cuts, table, bound);
    run_dp(&sorted, &items, &cuts, &rows, table, bound)
}

/// Like [`compute_schedule`] but requests sharing a layer are split only as a
/// whole (or in chunks of at most `bound`).
pub fn compute_schedule_layer_units<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
) -> Result<Schedule<T>, SchedError> {
    let sorted = sorted_snapshot(requests, table.num_layers())?;
    if bound == 0 && !sorted.is_empty() {
        return Err(infeasible(&sorted, bound));
    }
    let items = native_items(&sorted, table.num_layers());
    let cuts = sweep::unit_cuts(&items, bound);
    let rows = sweep::build_rows(&items, &cuts, table, bound);
    run_dp(&sorted, &items, &cuts, &rows, table, bound)
}

/// A value with the wall time spent producing it.
#[derive(Clone, Debug)]
pub struct Timed<V> {
    pub value: V,
    pub elapsed: Duration,
}

/// Layer-unit scheduling over aggregated layer groups.
///
/// Requests are placed in the group holding their layer and the DP runs on
/// the group-level table; segment `start_layer` is reported as the first
/// layer of the group.
pub fn compute_schedule_grouped<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    groups: &LayerGroups,
    bound: usize,
) -> Result<Timed<Schedule<T>>, SchedError> {
    let t0 = Instant::now();
    let sorted = sorted_snapshot(requests, table.num_layers())?;
    if bound == 0 && !sorted.is_empty() {
        return Err(infeasible(&sorted, bound));
    }
    let agg = table.aggregate(groups);
    let g = groups.len();
    let items: Vec<Item> = sorted.iter().map(|r| Item::native(groups.group_of(r.layer), g)).collect();
    let cuts = sweep::unit_cuts(&items, bound);
    let rows = sweep::build_rows(&items, &cuts, &agg, bound);
    let mut s = run_dp(&sorted, &items, &cuts, &rows, &agg, bound)?;
    for seg in &mut s.segments {
        seg.start_layer = groups.first_layer(seg.start_layer);
    }
    Ok(Timed { value: s, elapsed: t0.elapsed() })
}

/// Counters from the last [`DpTable::update`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateStats {
    /// Rows copied whole from the cache.
    pub rows_reused: usize,
    /// Rows that kept a cached prefix and computed the rest.
    pub rows_extended: usize,
    /// Rows computed from scratch.
    pub rows_computed: usize,
}

/// Cached segment evaluations of the last snapshot, for incremental
/// re-scheduling after layer completions and arrivals.
#[derive(Clone, Debug)]
pub struct DpTable<T> {
    ids: Vec<RequestId>,
    layers: Vec<usize>,
    rows: Vec<Row<T>>,
    bound: usize,
    num_layers: usize,
    schedule: Option<Schedule<T>>,
    stats: UpdateStats,
}

impl<T: Scalar> Default for DpTable<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> DpTable<T> {
    pub fn new() -> Self {
        DpTable {
            ids: Vec::new(),
            layers: Vec::new(),
            rows: Vec::new(),
            bound: 0,
            num_layers: 0,
            schedule: None,
            stats: UpdateStats::default(),
        }
    }

    pub fn stats(&self) -> UpdateStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Drops the cache; the next update recomputes everything.
    pub fn invalidate(&mut self) {
        *self = Self::new();
    }

    /// Schedules `requests`, reusing every cached segment whose members are
    /// unchanged. Matches [`compute_schedule`] exactly.
    pub fn update(
        &mut self,
        requests: &[Request<T>],
        table: &CostTable<T>,
        bound: usize,
    ) -> Result<Schedule<T>, SchedError> {
        let sorted = sorted_snapshot(requests, table.num_layers())?;
        let ids: Vec<RequestId> = sorted.iter().map(|r| r.id).collect();
        let layers: Vec<usize> = sorted.iter().map(|r| r.layer).collect();
        let n = ids.len();
        let compatible = self.bound == bound && self.num_layers == table.num_layers();
        if compatible && ids == self.ids && layers == self.layers {
            if let Some(s) = &self.schedule {
                self.stats = UpdateStats { rows_reused: n, ..Default::default() };
                return Ok(s.clone());
            }
        }

        let shift = if compatible { ids.first().and_then(|id| self.ids.iter().position(|x| x == id)) } else { None };
        let mut run = vec![0usize; n];
        if let Some(shift) = shift {
            for p in 0..n {
                let q = p + shift;
                let same = q < self.ids.len() && self.ids[q] == ids[p] && self.layers[q] == layers[p];
                run[p] = if same { 1 + if p > 0 { run[p - 1] } else { 0 } } else { 0 };
            }
        }

        let items = native_items(&sorted, table.num_layers());
        let cuts = sweep::all_cuts(n);
        let mut stats = UpdateStats::default();
        let mut old_rows = std::mem::take(&mut self.rows);
        let mut rows = Vec::with_capacity(n);
        for e in 1..=n {
            let reusable = run[e - 1];
            if reusable == 0 {
                rows.push(sweep::extend_row(&items, &cuts, e, table, bound, Vec::new()));
                stats.rows_computed += 1;
                continue;
            }
            let mut head = std::mem::take(&mut old_rows[e - 1 + shift.unwrap()]);
            // a cached row shorter than the unchanged run stopped on an
            // infeasible segment made only of unchanged members
            if head.len() < reusable || reusable == e {
                head.truncate(e);
                rows.push(head);
                stats.rows_reused += 1;
                continue;
            }
            head.truncate(reusable);
            rows.push(sweep::extend_row(&items, &cuts, e, table, bound, head));
            stats.rows_extended += 1;
        }

        let result = run_dp(&sorted, &items, &cuts, &rows, table, bound);
        self.ids = ids;
        self.layers = layers;
        self.rows = rows;
        self.bound = bound;
        self.num_layers = table.num_layers();
        self.stats = stats;
        self.schedule = result.as_ref().ok().cloned();
        result
    }
}

/// Incremental re-scheduling through a cached [`DpTable`].
pub fn incremental_update<T: Scalar>(
    dp: &mut DpTable<T>,
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
) -> Result<Schedule<T>, SchedError> {
    dp.update(requests, table, bound)
}

/// Every request runs alone, in arrival order.
pub fn baseline_no_batch<T: Scalar>(requests: &[Request<T>], table: &CostTable<T>) -> Schedule<T> {
    let mut sorted: Vec<&Request<T>> = requests.iter().collect();
    sorted.sort_by(|a, b| arrival_order(a, b));
    let n = table.num_layers();
    let items = native_items(&sorted, n);
    let ids: Vec<RequestId> = sorted.iter().map(|r| r.id).collect();
    let segments: Vec<(usize, usize)> = (0..ids.len()).map(|i| (i, i + 1)).collect();
    assemble(&dnn_of(&sorted), &ids, &vec![true; ids.len()], &items, &segments, table, 1, T::zero())
}

/// Up to `bound` oldest requests per segment, repeated until all are placed.
pub fn baseline_batch<T: Scalar>(requests: &[Request<T>], table: &CostTable<T>, bound: usize) -> Schedule<T> {
    let mut sorted: Vec<&Request<T>> = requests.iter().collect();
    sorted.sort_by(|a, b| arrival_order(a, b));
    let bound = bound.min(table.max_batch()).max(1);
    let items = native_items(&sorted, table.num_layers());
    let ids: Vec<RequestId> = sorted.iter().map(|r| r.id).collect();
    let segments: Vec<(usize, usize)> =
        (0..ids.len()).step_by(bound).map(|a| (a, (a + bound).min(ids.len()))).collect();
    assemble(&dnn_of(&sorted), &ids, &vec![true; ids.len()], &items, &segments, table, bound, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CostTable<f64> {
        CostTable::from_fn(2, 8, |_, b| if b == 1 { 10.0 } else { 12.0 })
    }

    fn req(id: u64, arrival: f64, layer: usize) -> Request<f64> {
        Request::new(id, "net", arrival, arrival + 1e6).at_layer(layer)
    }

    #[test]
    fn segment_duration_examples() {
        let t = table();
        let one = segment_duration(&[req(1, 0.0, 1)], &t, 8).unwrap();
        assert_eq!((one.duration, one.max_batch), (20.0, 1));
        let two = segment_duration(&[req(1, 0.0, 1), req(2, 1.0, 1)], &t, 8).unwrap();
        assert_eq!((two.duration, two.max_batch), (24.0, 2));
        let stair = segment_duration(&[req(1, 0.0, 2), req(2, 1.0, 1)], &t, 8).unwrap();
        assert_eq!(stair.duration, 22.0);
        assert_eq!(stair.batch_sizes, vec![1, 2]);
    }

    #[test]
    fn cost_examples() {
        let t = table();
        let rs = [req(1, 0.0, 1), req(2, 1.0, 1)];
        assert_eq!(cost(&rs, 2, 1, &t, 8), Some(48.0));
        assert_eq!(cost(&rs, 2, 2, &t, 8), Some(20.0));
        let three: Vec<_> = (0..3).map(|i| req(i, i as f64, 1)).collect();
        assert_eq!(cost(&three, 3, 1, &t, 2), None);
    }

    #[test]
    fn compute_schedule_examples() {
        let t = table();
        let s = compute_schedule(&[req(1, 0.0, 1), req(2, 1.0, 1)], &t, 8).unwrap();
        assert_eq!(s.objective, 48.0);
        assert_eq!(s.segment_ids(), vec![vec![RequestId(1), RequestId(2)]]);

        let s = compute_schedule(&[req(1, 0.0, 2), req(2, 1.0, 1)], &t, 8).unwrap();
        assert_eq!(s.objective, 40.0);
        assert_eq!(s.segments.len(), 2);
        assert_eq!(s.predicted_completion[&RequestId(1)], 10.0);
        assert_eq!(s.predicted_completion[&RequestId(2)], 30.0);

        let s = compute_schedule(&[req(7, 0.0, 1)], &t, 8).unwrap();
        assert_eq!(s.objective, 20.0);
    }

    #[test]
    fn empty_snapshot_gives_empty_schedule() {
        let s = compute_schedule::<f64>(&[], &table(), 8).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn zero_bound_is_infeasible() {
        let err = compute_schedule(&[req(1, 0.0, 2)], &table(), 0).unwrap_err();
        assert_eq!(err, SchedError::Infeasible { layer: 2, count: 1, bound: 0 });
    }

    #[test]
    fn out_of_range_layer_is_rejected() {
        assert!(matches!(
            compute_schedule(&[req(1, 0.0, 3)], &table(), 8),
            Err(SchedError::LayerOutOfRange { layer: 3, .. })
        ));
    }

    #[test]
    fn baselines() {
        let t = table();
        let rs = [req(1, 0.0, 1), req(2, 1.0, 1)];
        let nb = baseline_no_batch(&rs, &t);
        assert_eq!(nb.objective, 60.0);
        let rs3: Vec<_> = (0..3).map(|i| req(i, i as f64, 1)).collect();
        let b = baseline_batch(&rs3, &t, 2);
        assert_eq!(b.segment_ids(), vec![vec![RequestId(0), RequestId(1)], vec![RequestId(2)]]);
        assert_eq!(baseline_batch(&rs3, &t, 1), baseline_no_batch(&rs3, &t));
    }

    #[test]
    fn grouped_with_one_group_is_one_segment() {
        let t = CostTable::from_fn(4, 16, |k, b| (k + b) as f64);
        let rs: Vec<_> = [4, 3, 1, 1].iter().enumerate().map(|(i, &l)| req(i as u64, i as f64, l)).collect();
        let g = compute_schedule_grouped(&rs, &t, &LayerGroups::from_bounds(vec![(1, 4)]), 16).unwrap();
        assert_eq!(g.value.segments.len(), 1);
        let per_layer = compute_schedule_grouped(&rs, &t, &LayerGroups::identity(4), 16).unwrap();
        assert_eq!(per_layer.value, compute_schedule_layer_units(&rs, &t, 16).unwrap());
    }

    #[test]
    fn incremental_reuses_rows_after_an_arrival() {
        let t = table();
        let mut rs: Vec<_> = (0..5).map(|i| req(i, i as f64, 1)).collect();
        let mut dp = DpTable::new();
        dp.update(&rs, &t, 8).unwrap();
        assert_eq!(dp.stats().rows_computed, 5);
        let again = dp.update(&rs, &t, 8).unwrap();
        assert_eq!(dp.stats().rows_reused, 5);
        assert_eq!(again, compute_schedule(&rs, &t, 8).unwrap());
        rs.push(req(9, 9.0, 1));
        let s = dp.update(&rs, &t, 8).unwrap();
        assert_eq!(dp.stats().rows_reused, 5);
        assert_eq!(dp.stats().rows_computed, 1);
        assert_eq!(s, compute_schedule(&rs, &t, 8).unwrap());
    }
}
