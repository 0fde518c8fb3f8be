//! Outcome CSV and summary JSON.
//!
//! Outcome columns, one row per generated request in id order:
//! `id, dnn, arrival_s, completion_s, deadline_s, on_time, location,
//! offload_k, network_delay_s`. Dropped requests leave `completion_s` empty;
//! `offload_k` is set only for partially offloaded requests. Floats are
//! printed with Rust's shortest round-trip formatting, so equal runs give
//! byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use layerbatch_core::Outcome64;

use crate::error::SimError;
use crate::metrics::{SummaryMetrics, SweepPoint};

pub const OUTCOME_HEADER: [&str; 9] =
    ["id", "dnn", "arrival_s", "completion_s", "deadline_s", "on_time", "location", "offload_k", "network_delay_s"];

#[derive(Serialize)]
struct Row<'a> {
    id: u64,
    dnn: &'a str,
    arrival_s: f64,
    completion_s: Option<f64>,
    deadline_s: f64,
    on_time: bool,
    location: &'a str,
    offload_k: Option<usize>,
    network_delay_s: f64,
}

pub fn write_outcomes<W: Write>(out: W, outcomes: &[Outcome64]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for o in outcomes {
        w.serialize(Row {
            id: o.id.0,
            dnn: o.dnn.as_str(),
            arrival_s: o.arrival,
            completion_s: o.completion,
            deadline_s: o.deadline,
            on_time: o.on_time,
            location: o.location.label(),
            offload_k: o.location.offload_k(),
            network_delay_s: o.network_delay,
        })?;
    }
    if outcomes.is_empty() {
        w.write_record(OUTCOME_HEADER)?;
    }
    w.flush().map_err(|e| SimError::io("<outcomes>", e))?;
    Ok(())
}

pub fn outcomes_csv(outcomes: &[Outcome64]) -> Result<String, SimError> {
    let mut buf = Vec::new();
    write_outcomes(&mut buf, outcomes)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn save_outcomes(path: impl AsRef<Path>, outcomes: &[Outcome64]) -> Result<(), SimError> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    write_outcomes(std::io::BufWriter::new(f), outcomes)
}

pub fn save_summary(path: impl AsRef<Path>, summary: &SummaryMetrics) -> Result<(), SimError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(|e| SimError::io(path, e))
}

/// Per-rate aggregate over seeds of one scheduler.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheduler: String,
    pub rate: f64,
    pub seeds: usize,
    pub on_time_mean: f64,
    pub on_time_std: f64,
    pub mean_completion_ms: f64,
    pub mean_completion_std_ms: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Groups points by scheduler and rate, keeping their order of appearance.
pub fn aggregate_sweep(points: &[SweepPoint]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let j = i + points[i..]
            .iter()
            .take_while(|p| p.scheduler == points[i].scheduler && p.rate == points[i].rate)
            .count();
        let ratios: Vec<f64> = points[i..j].iter().map(|p| p.on_time_ratio).collect();
        let lat: Vec<f64> = points[i..j].iter().map(|p| p.mean_completion_s * 1e3).collect();
        let (om, os) = mean_std(&ratios);
        let (lm, ls) = mean_std(&lat);
        rows.push(SweepRow {
            scheduler: points[i].scheduler.name().to_string(),
            rate: points[i].rate,
            seeds: j - i,
            on_time_mean: om,
            on_time_std: os,
            mean_completion_ms: lm,
            mean_completion_std_ms: ls,
        });
        i = j;
    }
    rows
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| SimError::io("<sweep>", e))?;
    Ok(())
}
