//! Client-side execution and offloading decisions.
//!
//! A client runs its local work FIFO on one device. For each new request it
//! either keeps it, ships it whole, or (partial mode) runs the first `k` layer
//! groups locally and ships the intermediate output, so local work overlaps
//! the wait for a busy server.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use layerbatch_core::{group_layers, DnnId, LayerGroups, ProfileSet64};

use crate::error::SimError;

/// Weight on a new throughput sample.
pub const EWMA_WEIGHT: f64 = 0.3;

/// `0.3·sample + 0.7·est`; the first sample is taken as is.
pub fn ewma_update(est: Option<f64>, sample: f64) -> f64 {
    match est {
        None => sample,
        Some(e) => EWMA_WEIGHT * sample + (1.0 - EWMA_WEIGHT) * e,
    }
}

/// Smoothed throughput in bits/s.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NetworkEstimator {
    estimate: Option<f64>,
}

impl NetworkEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, bits_per_s: f64) {
        if bits_per_s > 0.0 && bits_per_s.is_finite() {
            self.estimate = Some(ewma_update(self.estimate, bits_per_s));
        }
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    /// Expected seconds to send `bits`; `fallback` bits/s before any sample.
    pub fn delay(&self, bits: f64, fallback: f64) -> f64 {
        if bits <= 0.0 {
            return 0.0;
        }
        bits / self.estimate.unwrap_or(fallback)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffloadMode {
    /// Every request goes to the server.
    #[default]
    None,
    Binary,
    Partial,
}

impl std::str::FromStr for OffloadMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(OffloadMode::None),
            "binary" => Ok(OffloadMode::Binary),
            "partial" => Ok(OffloadMode::Partial),
            _ => Err(format!("unknown offload mode `{s}` (none, binary, partial)")),
        }
    }
}

/// How partial offloading picks the split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartialRule {
    /// Minimise estimated completion over every `k`.
    #[default]
    MinCompletion,
    /// Smallest `k` whose local time covers the server wait.
    FirstCovering,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Placement {
    Local,
    Offload,
}

/// Estimates behind one binary decision, all in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryInput {
    pub now: f64,
    pub deadline: f64,
    pub local_backlog: f64,
    pub local_runtime: f64,
    pub tx_estimate: f64,
    /// Predicted server time from arrival to completion.
    pub server_estimate: f64,
}

/// Local when it meets the deadline, else whichever is faster; ties offload.
pub fn decide_binary(x: &BinaryInput) -> Placement {
    let local = x.local_backlog + x.local_runtime;
    if x.now + local <= x.deadline {
        return Placement::Local;
    }
    if local < x.tx_estimate + x.server_estimate {
        Placement::Local
    } else {
        Placement::Offload
    }
}

/// Per-`k` estimates for a partial decision, `k = 0..=G`, relative to now.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialInput {
    /// Client finish time of groups `1..=k`, backlog included.
    pub t_client: Vec<f64>,
    /// Wait before the server can start the request.
    pub t_server: Vec<f64>,
    /// Expected transfer time of what is sent after `k` groups.
    pub tx: Vec<f64>,
    /// Server time for groups `k+1..=G`.
    pub server_rest: Vec<f64>,
    pub compress: f64,
    pub decompress: f64,
}

impl PartialInput {
    pub fn groups(&self) -> usize {
        self.t_client.len() - 1
    }

    /// Estimated completion when the first `k` groups run locally.
    pub fn estimate(&self, k: usize) -> f64 {
        let g = self.groups();
        if k == g {
            return self.t_client[g];
        }
        let (c, d) = if k == 0 { (0.0, 0.0) } else { (self.compress, self.decompress) };
        (self.t_client[k] + c + self.tx[k]).max(self.t_server[k]) + self.server_rest[k] + d
    }
}

/// Number of groups to run locally; `0` ships the image, `G` keeps it all.
pub fn decide_partial(x: &PartialInput, rule: PartialRule) -> usize {
    let g = x.groups();
    match rule {
        PartialRule::MinCompletion => {
            let mut best = 0;
            for k in 1..=g {
                if x.estimate(k) < x.estimate(best) {
                    best = k;
                }
            }
            best
        }
        PartialRule::FirstCovering => (0..=g).find(|&k| x.t_server[k] <= x.t_client[k]).unwrap_or(g),
    }
}

/// What the server tells a client.
pub trait ServerView {
    /// Seconds from `now` until the server could start new work for `dnn`.
    fn wait_estimate(&self, dnn: &DnnId, now: f64) -> f64;
}

/// Client profile as stored on disk, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientProfileFile {
    #[serde(default = "default_compress")]
    pub compress_ms: f64,
    #[serde(default = "default_decompress")]
    pub decompress_ms: f64,
    pub groups: usize,
    pub dnns: BTreeMap<String, ClientDnnRecord>,
}

fn default_compress() -> f64 {
    1.5
}

fn default_decompress() -> f64 {
    0.6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientDnnRecord {
    /// Mean local runtime of the whole DNN.
    pub full_ms: f64,
    /// Local runtime per group; split like the server's solo runtimes when absent.
    #[serde(default)]
    pub group_ms: Option<Vec<f64>>,
    /// Bits sent after each group; the server profile's output sizes when absent.
    #[serde(default)]
    pub payload_bits: Option<Vec<f64>>,
}

/// One DNN on the client, in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientDnn {
    pub full: f64,
    pub group: Vec<f64>,
    /// Group boundaries in the server profile's layer numbering.
    pub groups: LayerGroups,
    /// Bits sent after group `k`, index `k − 1`.
    pub payload_bits: Vec<f64>,
    /// Solo server time of groups `k+1..=G`, index `k`.
    pub server_rest: Vec<f64>,
}

impl ClientDnn {
    pub fn num_groups(&self) -> usize {
        self.group.len()
    }

    /// Local time of groups `1..=k`.
    pub fn local_prefix(&self, k: usize) -> f64 {
        self.group[..k].iter().sum()
    }
}

/// Client profile resolved against a server profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientProfile {
    pub compress: f64,
    pub decompress: f64,
    pub dnns: BTreeMap<DnnId, ClientDnn>,
}

impl ClientProfile {
    pub fn load(path: impl AsRef<Path>, server: &ProfileSet64) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let file: ClientProfileFile = serde_json::from_str(&text)?;
        Self::resolve(&file, server)
    }

    pub fn resolve(file: &ClientProfileFile, server: &ProfileSet64) -> Result<Self, SimError> {
        let err = |m: String| Err(SimError::Client(m));
        if file.groups == 0 {
            return err("group count must be at least 1".into());
        }
        let mut dnns = BTreeMap::new();
        for (name, rec) in &file.dnns {
            let id = DnnId::from(name.as_str());
            let table = server.table(&id).ok_or_else(|| SimError::UnknownDnn(id.clone()))?;
            let solo = table.solo_layers();
            let g = file.groups.min(solo.len());
            let groups = group_layers(&solo, g)?;
            let group_solo: Vec<f64> = groups.iter().map(|r| r.map(|k| solo[k - 1]).sum()).collect();
            let solo_total: f64 = group_solo.iter().sum();
            let full = rec.full_ms / 1e3;
            if !(full > 0.0) {
                return err(format!("`{name}` full runtime must be positive"));
            }
            let group = match &rec.group_ms {
                Some(v) => {
                    if v.len() != g {
                        return err(format!("`{name}` lists {} group runtimes for {g} groups", v.len()));
                    }
                    let sum: f64 = v.iter().sum::<f64>() / 1e3;
                    if (sum - full).abs() > 0.01 * full {
                        return err(format!(
                            "`{name}` group runtimes sum to {:.3} ms, not {} ms",
                            sum * 1e3,
                            rec.full_ms
                        ));
                    }
                    v.iter().map(|x| x / 1e3).collect()
                }
                None => group_solo.iter().map(|s| full * s / solo_total).collect(),
            };
            let payload_bits = match &rec.payload_bits {
                Some(v) if v.len() != g => {
                    return err(format!("`{name}` lists {} payload sizes for {g} groups", v.len()))
                }
                Some(v) => v.clone(),
                None => groups.iter().map(|r| server.output_bits(&id, *r.end()).unwrap_or(0.0)).collect(),
            };
            let server_rest: Vec<f64> = (0..=g).map(|k| group_solo[k..].iter().sum()).collect();
            dnns.insert(id, ClientDnn { full, group, groups, payload_bits, server_rest });
        }
        Ok(ClientProfile { compress: file.compress_ms / 1e3, decompress: file.decompress_ms / 1e3, dnns })
    }
}

/// A client's FIFO device and its throughput estimate.
#[derive(Clone, Debug, Default)]
pub struct Client {
    pub busy_until: f64,
    pub estimator: NetworkEstimator,
}

impl Client {
    pub fn backlog(&self, now: f64) -> f64 {
        (self.busy_until - now).max(0.0)
    }

    /// Queues `work` seconds behind earlier local work and returns its end.
    pub fn enqueue(&mut self, now: f64, work: f64) -> f64 {
        self.busy_until = self.busy_until.max(now) + work;
        self.busy_until
    }
}

/// Inputs for [`decide_partial`] from the client state and a server view.
pub fn partial_input(
    client: &Client,
    dnn: &ClientDnn,
    image_bits: f64,
    server_wait: f64,
    now: f64,
    fallback_bps: f64,
    compress: f64,
    decompress: f64,
) -> PartialInput {
    let g = dnn.num_groups();
    let backlog = client.backlog(now);
    let t_client = (0..=g).map(|k| backlog + dnn.local_prefix(k)).collect();
    let tx = (0..=g)
        .map(|k| {
            let bits = if k == 0 { image_bits } else { dnn.payload_bits[k - 1] };
            client.estimator.delay(bits, fallback_bps)
        })
        .collect();
    PartialInput {
        t_client,
        t_server: vec![server_wait; g + 1],
        tx,
        server_rest: dnn.server_rest.clone(),
        compress,
        decompress,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_examples() {
        assert_eq!(ewma_update(Some(10.0), 10.0), 10.0);
        assert!((ewma_update(Some(10.0), 20.0) - 13.0).abs() < 1e-12);
        assert_eq!(ewma_update(None, 7.0), 7.0);
        let mut e = 100.0;
        let mut gap = (e - 5.0f64).abs();
        for _ in 0..20 {
            e = ewma_update(Some(e), 5.0);
            let g = (e - 5.0f64).abs();
            assert!((g - 0.7 * gap).abs() < 1e-9);
            gap = g;
        }
    }

    fn binary(backlog: f64, server: f64, deadline: f64) -> BinaryInput {
        BinaryInput {
            now: 0.0,
            deadline,
            local_backlog: backlog,
            local_runtime: 0.230,
            tx_estimate: 0.0,
            server_estimate: server,
        }
    }

    #[test]
    fn binary_examples() {
        assert_eq!(decide_binary(&binary(0.0, 0.01, 0.300)), Placement::Local);
        assert_eq!(decide_binary(&binary(0.200, 0.150, 0.300)), Placement::Offload);
        assert_eq!(decide_binary(&binary(0.200, 1.0, 0.300)), Placement::Local);
        // tie goes to the server
        assert_eq!(decide_binary(&binary(0.0, 0.230, 0.100)), Placement::Offload);
    }

    fn staircase(wait: f64, client_group: f64, server_group: f64, g: usize) -> PartialInput {
        PartialInput {
            t_client: (0..=g).map(|k| client_group * k as f64).collect(),
            t_server: vec![wait; g + 1],
            tx: vec![0.0; g + 1],
            server_rest: (0..=g).map(|k| server_group * (g - k) as f64).collect(),
            compress: 0.0,
            decompress: 0.0,
        }
    }

    #[test]
    fn partial_examples() {
        // idle server that is faster per group: ship immediately
        assert_eq!(decide_partial(&staircase(0.0, 0.020, 0.012, 5), PartialRule::MinCompletion), 0);
        // 50 ms wait, 20 ms per client group: three groups cover the wait
        let x = staircase(0.050, 0.020, 0.012, 5);
        assert_eq!(decide_partial(&x, PartialRule::MinCompletion), 3);
        assert_eq!(decide_partial(&x, PartialRule::FirstCovering), 3);
        // never covered: keep everything
        assert_eq!(decide_partial(&staircase(9.0, 0.020, 0.012, 5), PartialRule::FirstCovering), 5);
        assert_eq!(x.estimate(5), 0.1);
    }

    #[test]
    fn client_queue_is_fifo() {
        let mut c = Client::default();
        assert_eq!(c.enqueue(1.0, 0.5), 1.5);
        assert_eq!(c.enqueue(1.2, 0.5), 2.0);
        assert!((c.backlog(1.4) - 0.6).abs() < 1e-12);
        assert_eq!(c.enqueue(5.0, 0.5), 5.5);
    }
}
