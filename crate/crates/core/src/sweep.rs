//! Segment sweeps and the segmentation dynamic program shared by the
//! schedulers.
//!
//! A segment is a run of consecutive arrival-ordered items executed together.
//! The sweep starts at the shallowest member's layer and picks members up as
//! it reaches them, so the batch at layer `k` is every member with
//! `start ≤ k ≤ exit`. Durations are summed directly from those counts, which
//! keeps them independent of how the segment was built.

use crate::profile::CostTable;
use crate::scalar::Scalar;

/// One request as seen by the sweep, in the scheduled DNN's layer numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Item {
    pub start: usize,
    /// Last layer the sweep carries this item through.
    pub exit: usize,
    /// Whether the item finishes its DNN at `exit`.
    pub completes: bool,
}

impl Item {
    pub fn native(start: usize, layers: usize) -> Self {
        Item { start, exit: layers, completes: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SegEval<T> {
    pub duration: T,
    /// Sum over completing members of their completion offset inside the segment.
    pub intra: T,
    /// Completing members.
    pub done: usize,
    pub max_batch: usize,
}

/// Batch counts of a segment under construction.
pub(crate) struct Counter<'a, T> {
    table: &'a CostTable<T>,
    bound: usize,
    counts: Vec<usize>,
    exits: Vec<usize>,
    lo: usize,
    hi: usize,
    done: usize,
}

impl<'a, T: Scalar> Counter<'a, T> {
    pub fn new(table: &'a CostTable<T>, bound: usize) -> Self {
        let n = table.num_layers();
        Counter {
            table,
            bound: bound.min(table.max_batch()),
            counts: vec![0; n + 2],
            exits: vec![0; n + 2],
            lo: usize::MAX,
            hi: 0,
            done: 0,
        }
    }

    pub fn add(&mut self, item: &Item) {
        if item.start > item.exit {
            return;
        }
        for c in &mut self.counts[item.start..=item.exit] {
            *c += 1;
        }
        if item.completes {
            self.exits[item.exit] += 1;
            self.done += 1;
        }
        self.lo = self.lo.min(item.start);
        self.hi = self.hi.max(item.exit);
    }

    /// `None` when some layer's batch exceeds the bound.
    pub fn eval(&self) -> Option<SegEval<T>> {
        let mut acc = T::zero();
        let mut intra = T::zero();
        let mut max_batch = 0;
        if self.lo > self.hi {
            return Some(SegEval { duration: acc, intra, done: 0, max_batch });
        }
        for k in self.lo..=self.hi {
            let b = self.counts[k];
            if b > 0 {
                if b > self.bound {
                    return None;
                }
                acc = acc + self.table.lookup(k, b)?;
                max_batch = max_batch.max(b);
            }
            let e = self.exits[k];
            if e > 0 {
                intra = intra + T::from_usize(e) * acc;
            }
        }
        Some(SegEval { duration: acc, intra, done: self.done, max_batch })
    }

    /// Batch size at every layer from 1 to N.
    pub fn batch_sizes(&self) -> Vec<usize> {
        self.counts[1..=self.table.num_layers()].to_vec()
    }

    /// Completion offset inside the segment of an item ending at `exit`.
    pub fn offset_at(&self, exit: usize) -> T {
        let mut acc = T::zero();
        if self.lo > self.hi {
            return acc;
        }
        for k in self.lo..=exit.min(self.hi) {
            let b = self.counts[k];
            if b > 0 {
                acc = acc + self.table.lookup(k, b).expect("feasible segment");
            }
        }
        acc
    }
}

#[cfg(test)]
pub(crate) fn eval_items<T: Scalar>(items: &[Item], table: &CostTable<T>, bound: usize) -> Option<SegEval<T>> {
    let mut c = Counter::new(table, bound);
    for it in items {
        c.add(it);
    }
    c.eval()
}

/// Evaluations of every segment ending at cut `b`, nearest start first.
/// Entry `d` covers cuts `b − 1 − d .. b`. The row stops at the first
/// infeasible segment since growing a segment never shrinks a batch.
pub(crate) type Row<T> = Vec<SegEval<T>>;

/// Computes row `b` given the first `reuse` entries from a cache.
pub(crate) fn extend_row<T: Scalar>(
    items: &[Item],
    cuts: &[usize],
    b: usize,
    table: &CostTable<T>,
    bound: usize,
    mut row: Row<T>,
) -> Row<T> {
    let mut counter = Counter::new(table, bound);
    let first_new = b - row.len();
    for it in &items[cuts[first_new]..cuts[b]] {
        counter.add(it);
    }
    for a in (0..first_new).rev() {
        for it in &items[cuts[a]..cuts[a + 1]] {
            counter.add(it);
        }
        match counter.eval() {
            Some(e) => row.push(e),
            None => break,
        }
    }
    row
}

pub(crate) fn build_rows<T: Scalar>(items: &[Item], cuts: &[usize], table: &CostTable<T>, bound: usize) -> Vec<Row<T>> {
    (1..cuts.len()).map(|b| extend_row(items, cuts, b, table, bound, Vec::new())).collect()
}

/// Segments `[cuts[a], cuts[b])` of the optimum, and its cost.
pub(crate) struct Solution<T> {
    pub objective: T,
    pub segments: Vec<(usize, usize)>,
}

/// `min_cost(b) = min_a min_cost(a) + (W0 − done_before(a) − done)·dur + intra`.
///
/// With every item native this is `(n − j)·dur` per segment, i.e. the total
/// completion time.
pub(crate) fn solve<T: Scalar>(items: &[Item], cuts: &[usize], rows: &[Row<T>], weight0: usize) -> Option<Solution<T>> {
    let m = cuts.len() - 1;
    let mut done_before = vec![0usize; items.len() + 1];
    for (i, it) in items.iter().enumerate() {
        done_before[i + 1] = done_before[i] + usize::from(it.completes);
    }
    let mut min_cost: Vec<Option<T>> = vec![None; m + 1];
    let mut choice = vec![0usize; m + 1];
    min_cost[0] = Some(T::zero());
    for b in 1..=m {
        let mut best: Option<T> = None;
        for (d, e) in rows[b - 1].iter().enumerate() {
            let a = b - 1 - d;
            let Some(prev) = min_cost[a] else { continue };
            let waiting = weight0 - done_before[cuts[a]] - e.done;
            let c = prev + T::from_usize(waiting) * e.duration + e.intra;
            if best.is_none_or(|x| c < x) {
                best = Some(c);
                choice[b] = a;
            }
        }
        min_cost[b] = best;
    }
    let objective = min_cost[m]?;
    let mut segments = Vec::new();
    let mut b = m;
    while b > 0 {
        let a = choice[b];
        segments.push((cuts[a], cuts[b]));
        b = a;
    }
    segments.reverse();
    Some(Solution { objective, segments })
}

/// Where a segment may begin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Split {
    /// Before any request.
    #[default]
    Request,
    /// Only between runs of requests at the same layer.
    LayerUnit,
}

pub(crate) fn cuts_for(split: Split, items: &[Item], bound: usize) -> Vec<usize> {
    match split {
        Split::Request => all_cuts(items.len()),
        Split::LayerUnit => unit_cuts(items, bound),
    }
}

/// Every index is a cut.
pub(crate) fn all_cuts(n: usize) -> Vec<usize> {
    (0..=n).collect()
}

/// Cuts between runs of equal start layer, with runs chunked to at most
/// `bound` items.
pub(crate) fn unit_cuts(items: &[Item], bound: usize) -> Vec<usize> {
    let bound = bound.max(1);
    let mut cuts = vec![0];
    let mut run = 0;
    for i in 1..items.len() {
        run += 1;
        if items[i].start != items[i - 1].start || run == bound {
            cuts.push(i);
            run = 0;
        }
    }
    if !items.is_empty() {
        cuts.push(items.len());
    }
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CostTable<f64> {
        CostTable::from_fn(2, 8, |_, b| if b == 1 { 10.0 } else { 12.0 })
    }

    #[test]
    fn counter_sweeps_from_shallowest_member() {
        let t = table();
        let e = eval_items(&[Item::native(2, 2), Item::native(1, 2)], &t, 8).unwrap();
        assert_eq!(e.duration, 22.0);
        assert_eq!(e.max_batch, 2);
        assert_eq!(e.intra, 44.0);
    }

    #[test]
    fn early_exit_items_complete_inside() {
        let t = table();
        let items = [Item { start: 1, exit: 1, completes: true }, Item::native(1, 2)];
        let e = eval_items(&items, &t, 8).unwrap();
        // layer 1 at b=2, layer 2 alone
        assert_eq!(e.duration, 22.0);
        assert_eq!(e.intra, 12.0 + 22.0);
    }

    #[test]
    fn bound_makes_segment_infeasible() {
        let t = table();
        assert!(eval_items(&[Item::native(1, 2); 3], &t, 2).is_none());
    }

    #[test]
    fn unit_cuts_split_runs_and_chunks() {
        let items: Vec<Item> = [3, 3, 3, 2, 1, 1].iter().map(|&s| Item::native(s, 3)).collect();
        assert_eq!(unit_cuts(&items, 90), vec![0, 3, 4, 6]);
        assert_eq!(unit_cuts(&items, 2), vec![0, 2, 3, 4, 6]);
        assert_eq!(unit_cuts(&[], 2), vec![0]);
    }

    #[test]
    fn dp_prefers_merge_for_equal_layers() {
        let t = table();
        let items = [Item::native(1, 2); 2];
        let cuts = all_cuts(2);
        let rows = build_rows(&items, &cuts, &t, 8);
        let s = solve(&items, &cuts, &rows, 2).unwrap();
        assert_eq!(s.objective, 48.0);
        assert_eq!(s.segments, vec![(0, 2)]);
    }
}
