//! Request generation.
//!
//! Every random quantity comes from its own ChaCha8 stream seeded by the
//! workload seed: arrivals on stream 0, image sizes on 1, the DNN mix on 2.
//! Changing one knob (say the size model) leaves the other sequences intact,
//! and ChaCha8 output is identical on every platform.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};

use layerbatch_core::DnnId;

use crate::error::SimError;

pub const STREAM_ARRIVALS: u64 = 0;
pub const STREAM_SIZES: u64 = 1;
pub const STREAM_MIX: u64 = 2;

pub const DEFAULT_PARETO_ALPHA: f64 = 1.25;

fn default_alpha() -> f64 {
    DEFAULT_PARETO_ALPHA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArrivalProcess {
    Poisson {
        rate: f64,
    },
    /// Lomax inter-arrivals with shape `alpha` and scale `(alpha − 1)/rate`,
    /// so the mean inter-arrival is `1/rate`.
    Pareto {
        rate: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Constant {
        rate: f64,
    },
}

impl ArrivalProcess {
    pub fn rate(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate }
            | ArrivalProcess::Pareto { rate, .. }
            | ArrivalProcess::Constant { rate } => rate,
        }
    }

    /// Same process at another mean rate.
    pub fn with_rate(&self, rate: f64) -> Self {
        match *self {
            ArrivalProcess::Poisson { .. } => ArrivalProcess::Poisson { rate },
            ArrivalProcess::Pareto { alpha, .. } => ArrivalProcess::Pareto { rate, alpha },
            ArrivalProcess::Constant { .. } => ArrivalProcess::Constant { rate },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArrivalProcess::Poisson { .. } => "poisson",
            ArrivalProcess::Pareto { .. } => "pareto",
            ArrivalProcess::Constant { .. } => "constant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SizeModel {
    Uniform {
        min_mbits: f64,
        max_mbits: f64,
    },
    /// CSV with a `size_mbits` column, replayed in order and looped.
    Trace {
        path: PathBuf,
    },
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel::Uniform { min_mbits: 0.12, max_mbits: 0.33 }
    }
}

fn default_mix() -> BTreeMap<String, f64> {
    BTreeMap::from([("vgg16".to_string(), 1.0)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub process: ArrivalProcess,
    pub requests: usize,
    /// DNN id → fraction of requests.
    #[serde(default = "default_mix")]
    pub mix: BTreeMap<String, f64>,
    /// Relative deadline.
    pub deadline_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sizes: SizeModel,
}

impl WorkloadSpec {
    pub fn new(process: ArrivalProcess, requests: usize, dnn: &str, deadline_s: f64, seed: u64) -> Self {
        WorkloadSpec {
            process,
            requests,
            mix: BTreeMap::from([(dnn.to_string(), 1.0)]),
            deadline_s,
            seed,
            sizes: SizeModel::default(),
        }
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        WorkloadSpec { process: self.process.with_rate(rate), ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        WorkloadSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Workload(m));
        let rate = self.process.rate();
        if !(rate > 0.0 && rate.is_finite()) {
            return bad(format!("rate {rate} must be positive"));
        }
        if let ArrivalProcess::Pareto { alpha, .. } = self.process {
            if !(alpha > 1.0) {
                return bad(format!("pareto alpha {alpha} must exceed 1 for a finite mean"));
            }
        }
        if self.mix.is_empty() {
            return bad("empty dnn mix".into());
        }
        if self.mix.values().any(|&f| !(f >= 0.0)) {
            return bad("mix fractions must be non-negative".into());
        }
        let total: f64 = self.mix.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return bad(format!("mix fractions sum to {total}, not 1"));
        }
        if !(self.deadline_s > 0.0) {
            return bad(format!("deadline {} s must be positive", self.deadline_s));
        }
        if let SizeModel::Uniform { min_mbits, max_mbits } = self.sizes {
            if !(0.0 <= min_mbits && min_mbits <= max_mbits) {
                return bad(format!("size range [{min_mbits}, {max_mbits}] Mbit is empty"));
            }
        }
        Ok(())
    }
}

/// One generated request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub id: u64,
    pub time: f64,
    pub dnn: DnnId,
    pub size_bits: f64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Inter-arrival gaps, deterministic per seed.
pub fn inter_arrivals(process: &ArrivalProcess, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, STREAM_ARRIVALS);
    match *process {
        ArrivalProcess::Poisson { rate } => {
            let d = Exp::new(rate).expect("positive rate");
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        ArrivalProcess::Pareto { rate, alpha } => {
            let scale = (alpha - 1.0) / rate;
            let d = Pareto::new(scale, alpha).expect("positive scale and shape");
            (0..n).map(|_| d.sample(&mut rng) - scale).collect()
        }
        ArrivalProcess::Constant { rate } => vec![1.0 / rate; n],
    }
}

fn read_size_trace(path: &Path) -> Result<Vec<f64>, SimError> {
    #[derive(Deserialize)]
    struct Row {
        size_mbits: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        out.push(r.size_mbits * 1e6);
    }
    if out.is_empty() {
        return Err(SimError::Workload(format!("size trace {} is empty", path.display())));
    }
    Ok(out)
}

/// All arrivals of a workload, non-decreasing in time.
pub fn generate_arrivals(spec: &WorkloadSpec) -> Result<Vec<Arrival>, SimError> {
    spec.validate()?;
    let n = spec.requests;
    let gaps = inter_arrivals(&spec.process, n, spec.seed);

    let mut size_rng = stream(spec.seed, STREAM_SIZES);
    let sizes: Vec<f64> = match &spec.sizes {
        SizeModel::Uniform { min_mbits, max_mbits } => (0..n)
            .map(|_| if max_mbits > min_mbits { size_rng.random_range(*min_mbits..*max_mbits) } else { *min_mbits } * 1e6)
            .collect(),
        SizeModel::Trace { path } => {
            let t = read_size_trace(path)?;
            (0..n).map(|i| t[i % t.len()]).collect()
        }
    };

    let mut mix_rng = stream(spec.seed, STREAM_MIX);
    let names: Vec<(&String, f64)> = spec.mix.iter().map(|(k, v)| (k, *v)).collect();
    let pick = |u: f64| {
        let mut acc = 0.0;
        for (name, f) in &names {
            acc += f;
            if u < acc {
                return *name;
            }
        }
        names.iter().rev().find(|(_, f)| *f > 0.0).map(|(n, _)| *n).unwrap_or(names[0].0)
    };

    let mut t = 0.0;
    Ok((0..n)
        .map(|i| {
            t += gaps[i];
            let u: f64 = mix_rng.random();
            Arrival { id: i as u64, time: t, dnn: DnnId::from(pick(u).as_str()), size_bits: sizes[i] }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(process: ArrivalProcess, n: usize) -> WorkloadSpec {
        WorkloadSpec::new(process, n, "vgg16", 0.3, 11)
    }

    #[test]
    fn constant_gaps() {
        let a = generate_arrivals(&spec(ArrivalProcess::Constant { rate: 10.0 }, 5)).unwrap();
        for w in a.windows(2) {
            assert!((w[1].time - w[0].time - 0.1).abs() < 1e-12);
        }
        assert!((a[0].time - 0.1).abs() < 1e-12);
    }

    #[test]
    fn poisson_mean_gap() {
        let g = inter_arrivals(&ArrivalProcess::Poisson { rate: 100.0 }, 5000, 3);
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        assert!((mean - 0.01).abs() < 0.05 * 0.01, "{mean}");
    }

    #[test]
    fn sizes_within_range() {
        let a = generate_arrivals(&spec(ArrivalProcess::Poisson { rate: 50.0 }, 2000)).unwrap();
        assert!(a.iter().all(|r| (0.12e6..=0.33e6).contains(&r.size_bits)));
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn streams_are_independent() {
        let base = spec(ArrivalProcess::Poisson { rate: 50.0 }, 100);
        let mut other = base.clone();
        other.sizes = SizeModel::Uniform { min_mbits: 1.0, max_mbits: 2.0 };
        let a = generate_arrivals(&base).unwrap();
        let b = generate_arrivals(&other).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.time == y.time && x.dnn == y.dnn));
    }

    #[test]
    fn mix_follows_fractions() {
        let mut s = spec(ArrivalProcess::Poisson { rate: 50.0 }, 4000);
        s.mix = BTreeMap::from([("a".into(), 0.25), ("b".into(), 0.75)]);
        let a = generate_arrivals(&s).unwrap();
        let share = a.iter().filter(|r| r.dnn.as_str() == "a").count() as f64 / a.len() as f64;
        assert!((share - 0.25).abs() < 0.03, "{share}");
    }

    #[test]
    fn validation() {
        let mut s = spec(ArrivalProcess::Pareto { rate: 10.0, alpha: 1.0 }, 3);
        assert!(s.validate().is_err());
        s.process = ArrivalProcess::Poisson { rate: 0.0 };
        assert!(s.validate().is_err());
        s.process = ArrivalProcess::Poisson { rate: 1.0 };
        s.mix = BTreeMap::from([("a".into(), 0.5)]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            requests = 10
            deadline_s = 0.15
            seed = 4
            process = { kind = "pareto", rate = 20.0 }
            [mix]
            vgg16 = 0.5
            fcn = 0.5
        "#;
        let s: WorkloadSpec = toml::from_str(text).unwrap();
        assert_eq!(s.process, ArrivalProcess::Pareto { rate: 20.0, alpha: 1.25 });
        assert_eq!(s.sizes, SizeModel::default());
        s.validate().unwrap();
    }
}
