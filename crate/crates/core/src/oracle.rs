//! Exhaustive reference solvers and random instance generators.
//!
//! Everything here enumerates schedules directly and shares no code with the
//! dynamic programs it checks. Meant for small instances only.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{arrival_order, DnnId, Request};
use crate::profile::{ComponentId, CostTable, ProfileSet, SharedComponent};
use crate::scalar::Scalar;
use crate::Exact;

/// Every split of `0..n` into contiguous non-empty ranges, `2^(n−1)` of them.
pub fn segmentations(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    (0u64..1 << (n - 1))
        .map(|mask| {
            let mut segs = Vec::new();
            let mut a = 0;
            for i in 1..n {
                if mask >> (i - 1) & 1 == 1 {
                    segs.push((a, i));
                    a = i;
                }
            }
            segs.push((a, n));
            segs
        })
        .collect()
}

/// Runtime of one segment swept from its shallowest member to layer `N`.
pub fn sweep_time<T: Scalar>(layers: &[usize], table: &CostTable<T>, bound: usize) -> Option<T> {
    let lo = *layers.iter().min()?;
    let mut total = T::zero();
    for k in lo..=table.num_layers() {
        let b = layers.iter().filter(|&&l| l <= k).count();
        if b > bound {
            return None;
        }
        total = total + table.lookup(k, b)?;
    }
    Some(total)
}

fn sorted<T: Scalar>(requests: &[Request<T>]) -> Vec<Request<T>> {
    let mut v = requests.to_vec();
    v.sort_by(arrival_order);
    v
}

/// Completion offsets of every request under one segmentation, in arrival order.
fn timeline<T: Scalar>(
    rs: &[Request<T>],
    segs: &[(usize, usize)],
    table: &CostTable<T>,
    bound: usize,
) -> Option<Vec<T>> {
    let mut out = Vec::with_capacity(rs.len());
    let mut t = T::zero();
    for &(a, b) in segs {
        let layers: Vec<usize> = rs[a..b].iter().map(|r| r.layer).collect();
        t = t + sweep_time(&layers, table, bound)?;
        out.extend(std::iter::repeat_n(t, b - a));
    }
    Some(out)
}

/// Minimum total completion time over all contiguous arrival-order
/// segmentations; `None` if none is feasible.
pub fn best_segmentation<T: Scalar>(requests: &[Request<T>], table: &CostTable<T>, bound: usize) -> Option<T> {
    let rs = sorted(requests);
    segmentations(rs.len())
        .iter()
        .filter_map(|s| timeline(&rs, s, table, bound).map(|c| c.into_iter().sum::<T>()))
        .fold(None, |best: Option<T>, c| Some(best.map_or(c, |b| b.min_of(c))))
}

/// Lexicographic minimum of (tardy jobs, total completion) over all
/// segmentations, with the schedule starting at `now`.
pub fn best_tardy<T: Scalar>(
    requests: &[Request<T>],
    table: &CostTable<T>,
    bound: usize,
    now: T,
) -> Option<(usize, T)> {
    let rs = sorted(requests);
    let mut best: Option<(usize, T)> = None;
    for s in segmentations(rs.len()) {
        let Some(c) = timeline(&rs, &s, table, bound) else { continue };
        let tardy = rs.iter().zip(&c).filter(|(r, &c)| now + c > r.deadline).count();
        let total: T = c.into_iter().sum();
        let better = match best {
            None => true,
            Some((bt, bc)) => tardy < bt || (tardy == bt && total < bc),
        };
        if better {
            best = Some((tardy, total));
        }
    }
    best
}

/// Minimum total completion over every DNN order and every segmentation of
/// each DNN's requests, running DNNs one after another.
pub fn best_multi<T: Scalar>(requests: &[Request<T>], profiles: &ProfileSet<T>, bound: usize) -> Option<T> {
    let mut by: BTreeMap<DnnId, Vec<Request<T>>> = BTreeMap::new();
    for r in requests {
        by.entry(r.dnn.clone()).or_default().push(r.clone());
    }
    for v in by.values_mut() {
        v.sort_by(arrival_order);
    }
    let dnns: Vec<DnnId> = by.keys().cloned().collect();
    let mut best: Option<T> = None;
    for order in dnns.iter().permutations(dnns.len()) {
        let choices: Vec<Vec<Vec<(usize, usize)>>> = order.iter().map(|d| segmentations(by[*d].len())).collect();
        for combo in choices.iter().map(|c| c.iter()).multi_cartesian_product() {
            let mut t = T::zero();
            let mut total = T::zero();
            let mut ok = true;
            for (d, segs) in order.iter().zip(combo) {
                let table = profiles.table(d)?;
                for &(a, b) in segs {
                    let layers: Vec<usize> = by[*d][a..b].iter().map(|r| r.layer).collect();
                    match sweep_time(&layers, table, bound) {
                        Some(x) => t = t + x,
                        None => ok = false,
                    }
                    total = total + T::from_usize(b - a) * t;
                }
            }
            if ok {
                best = Some(best.map_or(total, |b| b.min_of(total)));
            }
        }
    }
    if dnns.is_empty() {
        return Some(T::zero());
    }
    best
}

/// Minimum total completion over every way of running layers step by step:
/// each step runs one layer for any subset of the requests waiting at it,
/// and requests must finish in arrival order (ties allowed). Exponential.
pub fn best_interleaving<T: Scalar>(requests: &[Request<T>], table: &CostTable<T>, bound: usize) -> Option<T> {
    let rs = sorted(requests);
    let start: Vec<usize> = rs.iter().map(|r| r.layer).collect();
    let mut memo = HashMap::new();
    search(&start, table, bound, &mut memo)
}

fn search<T: Scalar>(
    pos: &[usize],
    table: &CostTable<T>,
    bound: usize,
    memo: &mut HashMap<Vec<usize>, Option<T>>,
) -> Option<T> {
    let done = table.num_layers() + 1;
    let unfinished = pos.iter().filter(|&&p| p < done).count();
    if unfinished == 0 {
        return Some(T::zero());
    }
    if let Some(v) = memo.get(pos) {
        return *v;
    }
    let mut best: Option<T> = None;
    let layers: Vec<usize> = pos.iter().copied().filter(|&p| p < done).unique().collect();
    for k in layers {
        let at: Vec<usize> = (0..pos.len()).filter(|&i| pos[i] == k).collect();
        for size in 1..=at.len().min(bound) {
            let Some(h) = table.lookup(k, size) else { continue };
            for subset in at.iter().copied().combinations(size) {
                let mut next = pos.to_vec();
                for &i in &subset {
                    next[i] += 1;
                }
                // a request may only finish once every earlier one has
                let fifo = subset.iter().all(|&i| next[i] < done || next[..i].iter().all(|&p| p == done));
                if !fifo {
                    continue;
                }
                if let Some(rest) = search(&next, table, bound, memo) {
                    let c = h * T::from_usize(unfinished) + rest;
                    best = Some(best.map_or(c, |b| b.min_of(c)));
                }
            }
        }
    }
    memo.insert(pos.to_vec(), best);
    best
}

/// Shape of random cost tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableShape {
    /// Any positive integer per entry, not monotone.
    Arbitrary,
    /// Integer, non-decreasing and concave in the batch size, hence
    /// sub-additive.
    Concave,
}

/// Random integer table with entries in `1..=max_ms` for batch one.
pub fn random_table<T: Scalar>(
    rng: &mut impl Rng,
    layers: usize,
    max_batch: usize,
    shape: TableShape,
    max_ms: usize,
) -> CostTable<T> {
    let mut rows = Vec::with_capacity(layers);
    for _ in 0..layers {
        let h1 = rng.random_range(1..=max_ms);
        let mut row = vec![h1];
        match shape {
            TableShape::Arbitrary => {
                for _ in 2..=max_batch {
                    row.push(rng.random_range(1..=2 * max_ms));
                }
            }
            TableShape::Concave => {
                let mut step = rng.random_range(0..=h1);
                for _ in 2..=max_batch {
                    let last = *row.last().unwrap();
                    row.push(last + step);
                    step = rng.random_range(0..=step);
                }
            }
        }
        rows.push(row);
    }
    CostTable::from_fn(layers, max_batch, |k, b| T::from_usize(rows[k - 1][b - 1]))
}

/// `n` requests with arrival times `0, 1, …` and non-increasing random layers.
pub fn random_fifo_requests<T: Scalar>(rng: &mut impl Rng, n: usize, layers: usize, dnn: &str) -> Vec<Request<T>> {
    let mut ls: Vec<usize> = (0..n).map(|_| rng.random_range(1..=layers)).collect();
    ls.sort_unstable_by(|a, b| b.cmp(a));
    ls.into_iter()
        .enumerate()
        .map(|(i, l)| {
            let a = T::from_usize(i);
            Request::new(i as u64, dnn, a, a + T::from_usize(1_000_000)).at_layer(l)
        })
        .collect()
}

/// Seeded generator used by the oracle suites.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random single-DNN instance with an exact integer-millisecond table.
pub fn exact_instance(
    seed: u64,
    max_n: usize,
    max_layers: usize,
    shape: TableShape,
) -> (Vec<Request<Exact>>, CostTable<Exact>) {
    let mut r = rng(seed);
    let n = r.random_range(1..=max_n);
    let layers = r.random_range(1..=max_layers);
    let table = random_table(&mut r, layers, n.max(2), shape, 20);
    let rs = random_fifo_requests(&mut r, n, layers, "net");
    (rs, table)
}

/// Three single-component DNNs `a`, `b`, `c` with 1 to 3 requests each.
pub fn multi_instance(seed: u64) -> (Vec<Request<Exact>>, ProfileSet<Exact>) {
    let mut r = rng(seed);
    let comps = (0..3)
        .map(|i| {
            let layers = r.random_range(1..=3);
            SharedComponent {
                id: ComponentId(format!("c{i}")),
                layer_names: vec![String::new(); layers],
                cost: random_table(&mut r, layers, 9, TableShape::Arbitrary, 20),
                output_bits: vec![0.0; layers],
            }
        })
        .collect();
    let p = ProfileSet::from_parts(9, comps, vec![("a", vec!["c0"]), ("b", vec!["c1"]), ("c", vec!["c2"])])
        .expect("valid generated profile");
    let mut rs = Vec::new();
    let mut id = 0;
    for d in ["a", "b", "c"] {
        let n_layers = p.table(&DnnId::from(d)).expect("generated dnn").num_layers();
        let k = r.random_range(1..=3);
        let mut layers: Vec<usize> = (0..k).map(|_| r.random_range(1..=n_layers)).collect();
        layers.sort_unstable_by(|a, b| b.cmp(a));
        for l in layers {
            let a = Exact::from_integer(id as i64);
            rs.push(Request::new(id, d, a, a + Exact::from_integer(1_000_000)).at_layer(l));
            id += 1;
        }
    }
    (rs, p)
}

/// A scheduler disagreeing with brute force on one generated instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub suite: &'static str,
    pub seed: u64,
    pub detail: String,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} seed {}: {}", self.suite, self.seed, self.detail)
    }
}

fn dump<T: Scalar>(rs: &[Request<T>]) -> String {
    rs.iter().map(|r| format!("{}@{}", r.id, r.layer)).collect::<Vec<_>>().join(" ")
}

/// Segment DP against every segmentation; `bound` of `None` is unbounded.
pub fn check_dp(seed: u64, max_n: usize, bound: Option<usize>) -> Result<(), Mismatch> {
    let (rs, t) = exact_instance(seed, max_n, 5, TableShape::Arbitrary);
    let bound = bound.unwrap_or(usize::MAX);
    let dp = crate::batch::compute_schedule(&rs, &t, bound).ok().map(|s| s.objective);
    let bf = best_segmentation(&rs, &t, bound);
    if dp == bf {
        return Ok(());
    }
    Err(Mismatch { suite: "dp", seed, detail: format!("dp {dp:?} vs brute force {bf:?}; requests {}", dump(&rs)) })
}

/// Tardy DP against every segmentation, with random deadlines.
pub fn check_tardy(seed: u64, max_n: usize, bound: Option<usize>) -> Result<(), Mismatch> {
    let (mut rs, t) = exact_instance(seed, max_n, 4, TableShape::Concave);
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let solo = t.solo_runtime(1).to_integer();
    for q in &mut rs {
        q.deadline = q.arrival + Exact::from_integer(r.random_range(1..=4 * solo));
    }
    let bound = bound.unwrap_or(usize::MAX);
    let zero = Exact::from_integer(0);
    let dp = crate::deadline::tardy_dp(&rs, &t, bound, zero).ok().map(|s| (s.tardy_count(), s.objective));
    let bf = best_tardy(&rs, &t, bound, zero);
    if dp == bf {
        return Ok(());
    }
    Err(Mismatch { suite: "tardy", seed, detail: format!("dp {dp:?} vs brute force {bf:?}; requests {}", dump(&rs)) })
}

/// Multi-DNN search against every order and segmentation.
pub fn check_multi(seed: u64, bound: Option<usize>) -> Result<(), Mismatch> {
    let (rs, p) = multi_instance(seed);
    let bound = bound.unwrap_or(9);
    let s = crate::multi::schedule_multi(&rs, &p, &crate::multi::MultiConfig::new(bound)).ok().map(|s| s.objective);
    let bf = best_multi(&rs, &p, bound);
    if s == bf {
        return Ok(());
    }
    Err(Mismatch {
        suite: "multi",
        seed,
        detail: format!("search {s:?} vs brute force {bf:?}; requests {}", dump(&rs)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segmentation_count() {
        assert_eq!(segmentations(1), vec![vec![(0, 1)]]);
        assert_eq!(segmentations(4).len(), 8);
    }

    #[test]
    fn brute_force_examples() {
        let t = CostTable::from_fn(2, 8, |_, b| if b == 1 { 10.0 } else { 12.0 });
        let same = [Request::new(1, "n", 0.0, 1e9), Request::new(2, "n", 1.0, 1e9)];
        assert_eq!(best_segmentation(&same, &t, 8), Some(48.0));
        let stair = [same[0].clone().at_layer(2), same[1].clone()];
        assert_eq!(best_segmentation(&stair, &t, 8), Some(40.0));
        assert_eq!(best_interleaving(&stair, &t, 8), Some(40.0));
    }

    #[test]
    fn concave_tables_are_subadditive() {
        let mut r = rng(3);
        for _ in 0..50 {
            let t: CostTable<f64> = random_table(&mut r, 3, 6, TableShape::Concave, 20);
            assert!(crate::profile::check_subadditivity(&t).is_empty());
        }
    }
}
