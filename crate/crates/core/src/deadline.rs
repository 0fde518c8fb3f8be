//! Deadline-aware scheduling: batching EDF, the tardy-minimising DP, and
//! dropping of expired requests.
//!
//! Deadlines are inclusive: finishing exactly at the deadline is on time.

use std::cmp::Ordering;

use crate::batch::{assemble, sorted_snapshot};
use crate::error::SchedError;
use crate::model::{arrival_order, Request, RequestId, RequestState, Schedule, Segment};
use crate::profile::CostTable;
use crate::scalar::Scalar;
use crate::sweep::{self, Counter, Item, Split};

/// Largest Pareto front kept per prefix in [`tardy_dp`]. Exact whenever no
/// prefix has more non-dominated partial schedules than this.
pub const FRONT_CAP: usize = 128;

fn cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Earliest-deadline-first batch formation.
///
/// Jobs are taken in deadline order. A job joins the forming batch when the
/// batch, swept with it, still finishes by every member's deadline; otherwise
/// it waits for a later batch of the same pass. A job that misses its
/// deadline even as the first job of a fresh batch is listed in
/// `Schedule::tardy` and left unscheduled.
pub fn edf_batch<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
    now: T,
) -> Result<Schedule<T>, SchedError> {
    let n_layers = table.num_layers();
    let mut order = sorted_snapshot(requests, n_layers)?;
    order.sort_by(|a, b| cmp(a.deadline, b.deadline).then_with(|| arrival_order(a, b)));

    let mut out = Schedule::empty();
    let mut elapsed = T::zero();
    let mut remaining = order;
    while !remaining.is_empty() {
        let mut batch: Vec<&Request<T>> = Vec::new();
        let mut min_deadline: Option<T> = None;
        let mut skipped = Vec::new();
        let mut duration = T::zero();
        let mut max_batch = 0;
        for job in remaining {
            let mut trial = Counter::new(table, bound);
            for r in batch.iter().chain(std::iter::once(&job)) {
                trial.add(&Item::native(r.layer, n_layers));
            }
            let limit = min_deadline.map_or(job.deadline, |d| d.min_of(job.deadline));
            match trial.eval() {
                Some(e) if now + elapsed + e.duration <= limit => {
                    batch.push(job);
                    min_deadline = Some(limit);
                    duration = e.duration;
                    max_batch = e.max_batch;
                }
                _ if batch.is_empty() => out.tardy.push(job.id),
                _ => skipped.push(job),
            }
        }
        remaining = skipped;
        if batch.is_empty() {
            continue;
        }
        let finish = elapsed + duration;
        batch.sort_by(|a, b| arrival_order(a, b));
        for r in &batch {
            out.predicted_completion.insert(r.id, finish);
            out.objective = out.objective + finish;
        }
        out.segments.push(Segment {
            dnn: batch[0].dnn.clone(),
            members: batch.iter().map(|r| r.id).collect(),
            absorbed: Vec::new(),
            start_layer: batch.iter().map(|r| r.layer).min().unwrap(),
            max_batch,
            duration,
            finish_offset: finish,
        });
        elapsed = finish;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
struct State<T> {
    tardy: usize,
    elapsed: T,
    cost: T,
    from: usize,
    parent: usize,
}

fn prune<T: Scalar>(mut cands: Vec<State<T>>, cap: usize) -> Vec<State<T>> {
    cands.sort_by(|a, b| {
        a.tardy.cmp(&b.tardy).then_with(|| cmp(a.elapsed, b.elapsed)).then_with(|| cmp(a.cost, b.cost))
    });
    let mut kept: Vec<State<T>> = Vec::new();
    for c in cands {
        let dominated = kept.iter().any(|k| k.tardy <= c.tardy && k.elapsed <= c.elapsed && k.cost <= c.cost);
        if !dominated {
            kept.push(c);
        }
    }
    if kept.len() > cap {
        kept.sort_by(|a, b| a.tardy.cmp(&b.tardy).then_with(|| cmp(a.cost, b.cost)));
        kept.truncate(cap);
    }
    kept
}

/// Segmentation minimising the number of tardy jobs, then total completion.
///
/// Each prefix keeps the non-dominated `(tardy, elapsed, total completion)`
/// partial schedules. Jobs predicted late under the chosen schedule stay in
/// their segments and are also listed in `Schedule::tardy` for dropping.
pub fn tardy_dp<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
    now: T,
) -> Result<Schedule<T>, SchedError> {
    tardy_dp_with(requests, table, bound, now, Split::Request)
}

/// [`tardy_dp`] with a choice of segment boundaries.
pub fn tardy_dp_with<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
    now: T,
    split: Split,
) -> Result<Schedule<T>, SchedError> {
    let n_layers = table.num_layers();
    let sorted = sorted_snapshot(requests, n_layers)?;
    if sorted.is_empty() {
        return Ok(Schedule::empty());
    }
    if bound == 0 {
        return Err(crate::batch::infeasible(&sorted, bound));
    }
    let items: Vec<Item> = sorted.iter().map(|r| Item::native(r.layer, n_layers)).collect();
    let cuts = sweep::cuts_for(split, &items, bound);
    let m = cuts.len() - 1;
    let mut fronts: Vec<Vec<State<T>>> = vec![Vec::new(); m + 1];
    fronts[0].push(State { tardy: 0, elapsed: T::zero(), cost: T::zero(), from: 0, parent: 0 });
    for b in 1..=m {
        let mut cands = Vec::new();
        let mut counter = Counter::new(table, bound);
        let mut deadlines: Vec<T> = Vec::new();
        for a in (0..b).rev() {
            for (it, r) in items[cuts[a]..cuts[a + 1]].iter().zip(&sorted[cuts[a]..cuts[a + 1]]) {
                counter.add(it);
                let at = deadlines.partition_point(|d| *d < r.deadline);
                deadlines.insert(at, r.deadline);
            }
            let Some(e) = counter.eval() else { break };
            let size = T::from_usize(cuts[b] - cuts[a]);
            for (p, s) in fronts[a].iter().enumerate() {
                let elapsed = s.elapsed + e.duration;
                let finish = now + elapsed;
                let late = deadlines.partition_point(|d| *d < finish);
                cands.push(State { tardy: s.tardy + late, elapsed, cost: s.cost + size * elapsed, from: a, parent: p });
            }
        }
        fronts[b] = prune(cands, FRONT_CAP);
    }
    let best = fronts[m]
        .iter()
        .enumerate()
        .min_by(|(_, x), (_, y)| {
            x.tardy.cmp(&y.tardy).then_with(|| cmp(x.cost, y.cost)).then_with(|| cmp(x.elapsed, y.elapsed))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| crate::batch::infeasible(&sorted, bound))?;

    let mut segments = Vec::new();
    let (mut b, mut idx) = (m, best);
    while b > 0 {
        let s = fronts[b][idx];
        segments.push((cuts[s.from], cuts[b]));
        b = s.from;
        idx = s.parent;
    }
    segments.reverse();
    let ids: Vec<RequestId> = sorted.iter().map(|r| r.id).collect();
    let mut out = assemble(&sorted[0].dnn, &ids, &vec![true; ids.len()], &items, &segments, table, bound, T::zero());
    out.tardy = sorted.iter().filter(|r| now + out.predicted_completion[&r.id] > r.deadline).map(|r| r.id).collect();
    Ok(out)
}

/// Splits off requests whose deadline has passed (`deadline < now`), marking
/// them dropped. Order is preserved on both sides.
pub fn drop_expired<T: Scalar>(requests: Vec<Request<T>>, now: T) -> (Vec<Request<T>>, Vec<Request<T>>) {
    let (kept, mut dropped): (Vec<_>, Vec<_>) = requests.into_iter().partition(|r| r.deadline >= now);
    for r in &mut dropped {
        r.state = RequestState::Dropped;
    }
    (kept, dropped)
}
