//! Throughput traces and transmission delays.
//!
//! Throughput is piecewise constant: point `i` holds from its timestamp until
//! the next one, and the last point holds for the trace's final interval.
//! Queries past the end wrap around to the start of the trace.

use std::path::Path;

use serde::Deserialize;

use crate::error::SimError;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTrace {
    /// `(timestamp seconds, throughput bits/s)`, timestamps strictly increasing.
    points: Vec<(f64, f64)>,
    period: f64,
}

#[derive(Deserialize)]
struct TraceRow {
    timestamp_s: f64,
    throughput_mbps: f64,
}

impl NetworkTrace {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SimError> {
        if points.is_empty() {
            return Err(SimError::Trace("no points".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(SimError::Trace(format!("timestamp {} does not increase on {}", w[1].0, w[0].0)));
        }
        if let Some(p) = points.iter().find(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
            return Err(SimError::Trace(format!("throughput at {} s must be positive", p.0)));
        }
        let n = points.len();
        let last_dt = if n > 1 { points[n - 1].0 - points[n - 2].0 } else { 1.0 };
        let period = points[n - 1].0 - points[0].0 + last_dt;
        Ok(NetworkTrace { points, period })
    }

    /// Throughput fixed at `bps` forever.
    pub fn constant(bps: f64) -> Result<Self, SimError> {
        Self::new(vec![(0.0, bps)])
    }

    /// Reads a `timestamp_s,throughput_mbps` CSV.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let r: TraceRow = row?;
            points.push((r.timestamp_s, r.throughput_mbps * 1e6));
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Length of one loop of the trace.
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Throughput in bits/s at absolute time `t`.
    pub fn throughput_at(&self, t: f64) -> f64 {
        let (i, _) = self.locate(t);
        self.points[i].1
    }

    /// Index of the point active at `t` and the time it stops being active.
    fn locate(&self, t: f64) -> (usize, f64) {
        let t0 = self.points[0].0;
        let cycles = ((t - t0) / self.period).floor();
        let base = t0 + cycles * self.period;
        let local = t - base;
        let i = self.points.partition_point(|p| p.0 - t0 <= local).saturating_sub(1);
        let end = if i + 1 < self.points.len() { self.points[i + 1].0 - t0 } else { self.period };
        (i, base + end)
    }
}

/// Time to push `bits` through `trace` starting at `start`.
pub fn transmission_delay(bits: f64, start: f64, trace: &NetworkTrace) -> f64 {
    if bits <= 0.0 {
        return 0.0;
    }
    let mut left = bits;
    let mut t = start;
    loop {
        let (i, end) = trace.locate(t);
        let rate = trace.points[i].1;
        // guard against a zero-length slice from rounding at a boundary
        let span = (end - t).max(0.0);
        let can = rate * span;
        if can >= left {
            return t + left / rate - start;
        }
        left -= can;
        t = if span > 0.0 { end } else { t + f64::EPSILON * t.abs().max(1.0) };
    }
}

/// Copy of `trace` with every throughput multiplied by `factor`.
pub fn scale_trace(trace: &NetworkTrace, factor: f64) -> Result<NetworkTrace, SimError> {
    if !(factor > 0.0) {
        return Err(SimError::Trace(format!("scale factor {factor} must be positive")));
    }
    NetworkTrace::new(trace.points.iter().map(|&(t, r)| (t, r * factor)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate() {
        let t = NetworkTrace::constant(10e6).unwrap();
        assert!((transmission_delay(1e6, 3.7, &t) - 0.1).abs() < 1e-12);
        assert_eq!(transmission_delay(0.0, 3.7, &t), 0.0);
    }

    #[test]
    fn step_down_halfway() {
        let t = NetworkTrace::new(vec![(0.0, 10e6), (0.05, 4e6), (10.0, 4e6)]).unwrap();
        let d = transmission_delay(2e6, 0.0, &t);
        assert!((d - (0.05 + 1.5 / 4.0)).abs() < 1e-12, "{d}");
    }

    #[test]
    fn wraps_around() {
        let t = NetworkTrace::new(vec![(0.0, 1e6), (1.0, 2e6)]).unwrap();
        assert_eq!(t.period(), 2.0);
        assert_eq!(t.throughput_at(2.5), 1e6);
        assert_eq!(t.throughput_at(3.5), 2e6);
        // 0.5 s at 2 Mbps, then 1 s at 1 Mbps after wrapping
        let d = transmission_delay(2e6, 1.5, &t);
        assert!((d - 1.5).abs() < 1e-12, "{d}");
    }

    #[test]
    fn scaling() {
        let t = NetworkTrace::new(vec![(0.0, 4e6), (1.0, 20e6)]).unwrap();
        assert_eq!(scale_trace(&t, 1.0).unwrap(), t);
        let s = scale_trace(&t, 10.0).unwrap();
        assert_eq!(s.points(), &[(0.0, 40e6), (1.0, 200e6)]);
        let h = scale_trace(&t, 0.5).unwrap();
        assert_eq!(h.points(), &[(0.0, 2e6), (1.0, 10e6)]);
        assert!(scale_trace(&t, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_traces() {
        assert!(NetworkTrace::new(vec![]).is_err());
        assert!(NetworkTrace::new(vec![(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(NetworkTrace::new(vec![(0.0, 0.0)]).is_err());
    }
}
