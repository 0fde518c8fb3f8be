//! Run summaries and capacity sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use layerbatch_core::{Outcome64, ProfileSet64};

use crate::engine::{simulate, SchedulerKind, SimConfig};
use crate::error::SimError;
use crate::workload::WorkloadSpec;

/// Share of requests that must finish on time for a rate to count.
pub const CAPACITY_THRESHOLD: f64 = 0.90;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SummaryMetrics {
    pub generated: usize,
    pub completed: usize,
    pub dropped: usize,
    pub on_time: usize,
    /// On-time requests over generated ones; drops count as late.
    pub on_time_ratio: f64,
    /// Completion time statistics over completed requests, seconds.
    pub mean_completion_s: f64,
    pub median_completion_s: f64,
    pub p95_completion_s: f64,
    pub by_location: BTreeMap<String, usize>,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Summary of a run. With `deadline_s`, on-time is re-judged against that
/// relative deadline instead of each outcome's own.
pub fn summarize(outcomes: &[Outcome64], deadline_s: Option<f64>) -> SummaryMetrics {
    let mut lat: Vec<f64> = outcomes.iter().filter_map(|o| o.latency()).collect();
    lat.sort_by(f64::total_cmp);
    let on_time = outcomes
        .iter()
        .filter(|o| match (deadline_s, o.latency()) {
            (Some(d), Some(l)) => l <= d,
            (None, Some(_)) => o.on_time,
            (_, None) => false,
        })
        .count();
    let mut by_location = BTreeMap::new();
    for o in outcomes.iter().filter(|o| !o.dropped()) {
        *by_location.entry(o.location.label().to_string()).or_insert(0) += 1;
    }
    let generated = outcomes.len();
    SummaryMetrics {
        generated,
        completed: lat.len(),
        dropped: generated - lat.len(),
        on_time,
        on_time_ratio: if generated == 0 { 0.0 } else { on_time as f64 / generated as f64 },
        mean_completion_s: if lat.is_empty() { 0.0 } else { lat.iter().sum::<f64>() / lat.len() as f64 },
        median_completion_s: percentile(&lat, 0.5),
        p95_completion_s: percentile(&lat, 0.95),
        by_location,
    }
}

/// One simulated rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub scheduler: SchedulerKind,
    pub rate: f64,
    pub seed: u64,
    pub on_time_ratio: f64,
    pub mean_completion_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityCurve {
    pub points: Vec<SweepPoint>,
    /// `None` when even the lowest rate misses the threshold.
    pub capacity: Option<f64>,
}

/// Highest rate before the on-time ratio first drops below the threshold.
/// `ratios` pairs rates (ascending) with on-time ratios.
pub fn capacity_of(ratios: &[(f64, f64)]) -> Option<f64> {
    let mut cap = None;
    for &(rate, ratio) in ratios {
        if ratio < CAPACITY_THRESHOLD {
            break;
        }
        cap = Some(rate);
    }
    cap
}

/// Runs every `(scheduler, rate, seed)` combination in parallel. Results are
/// ordered by scheduler, rate and seed, independent of thread timing.
pub fn sweep_grid(
    template: &WorkloadSpec,
    rates: &[f64],
    seeds: &[u64],
    schedulers: &[SchedulerKind],
    profiles: &ProfileSet64,
    cfg: &SimConfig,
) -> Result<Vec<SweepPoint>, SimError> {
    let jobs: Vec<(SchedulerKind, f64, u64)> = schedulers
        .iter()
        .flat_map(|&s| rates.iter().flat_map(move |&r| seeds.iter().map(move |&seed| (s, r, seed))))
        .collect();
    jobs.par_iter()
        .map(|&(scheduler, rate, seed)| {
            let spec = template.with_rate(rate).with_seed(seed);
            let run = simulate(&spec, profiles, &cfg.with_scheduler(scheduler))?;
            Ok(SweepPoint {
                scheduler,
                rate,
                seed,
                on_time_ratio: run.summary.on_time_ratio,
                mean_completion_s: run.summary.mean_completion_s,
            })
        })
        .collect()
}

/// Capacity of one scheduler over ascending `rates`, using the template's seed.
pub fn capacity_sweep(
    template: &WorkloadSpec,
    rates: &[f64],
    profiles: &ProfileSet64,
    cfg: &SimConfig,
) -> Result<CapacityCurve, SimError> {
    if rates.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SimError::Workload("sweep rates must be strictly ascending".into()));
    }
    let points = sweep_grid(template, rates, &[template.seed], &[cfg.scheduler], profiles, cfg)?;
    let ratios: Vec<(f64, f64)> = points.iter().map(|p| (p.rate, p.on_time_ratio)).collect();
    Ok(CapacityCurve { capacity: capacity_of(&ratios), points })
}
