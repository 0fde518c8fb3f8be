//! Domain types shared by the schedulers and the simulator.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::profile::DnnProfile;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DnnId(pub String);

impl DnnId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for DnnId {
    fn from(s: &str) -> Self {
        DnnId(s.to_owned())
    }
}

impl fmt::Display for DnnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestState {
    Pending,
    Running,
    Completed,
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// Generated by local client `k`, which may run part or all of it.
    Client(usize),
    /// Generated remotely; reaches the server through the network trace.
    RemoteTrace,
}

/// One inference job.
///
/// `layer` is 1-based: `1` means waiting for the first layer and `N + 1`
/// means finished.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request<T> {
    pub id: RequestId,
    pub dnn: DnnId,
    pub arrival: T,
    /// Absolute deadline.
    pub deadline: T,
    pub layer: usize,
    pub state: RequestState,
    pub origin: Origin,
}

impl<T: Scalar> Request<T> {
    pub fn new(id: u64, dnn: impl Into<DnnId>, arrival: T, deadline: T) -> Self {
        Request {
            id: RequestId(id),
            dnn: dnn.into(),
            arrival,
            deadline,
            layer: 1,
            state: RequestState::Pending,
            origin: Origin::RemoteTrace,
        }
    }

    pub fn at_layer(mut self, layer: usize) -> Self {
        self.layer = layer;
        self
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    /// Moves the request to `layer`; positions never go backwards.
    pub fn advance_to(&mut self, layer: usize) -> Result<(), ModelError> {
        if layer < self.layer {
            return Err(ModelError::LayerRegression { id: self.id, from: self.layer, to: layer });
        }
        self.layer = layer;
        Ok(())
    }

    pub fn transition(&mut self, to: RequestState) -> Result<(), ModelError> {
        use RequestState::*;
        let ok = matches!(
            (self.state, to),
            (Pending, Running) | (Running, Completed) | (Pending, Dropped) | (Running, Dropped)
        );
        if !ok {
            return Err(ModelError::IllegalTransition { id: self.id, from: self.state, to });
        }
        self.state = to;
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, RequestState::Pending | RequestState::Running)
    }
}

/// Arrival order with ties broken by lower id.
pub fn arrival_order<T: Scalar>(a: &Request<T>, b: &Request<T>) -> Ordering {
    a.arrival.partial_cmp(&b.arrival).unwrap_or(Ordering::Equal).then(a.id.cmp(&b.id))
}

pub fn sort_by_arrival<T: Scalar>(requests: &mut [Request<T>]) {
    requests.sort_by(arrival_order);
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `later` arrived after `earlier` but sits at a deeper layer.
    Fifo {
        earlier: RequestId,
        later: RequestId,
        earlier_layer: usize,
        later_layer: usize,
    },
    LayerOutOfRange {
        id: RequestId,
        layer: usize,
    },
    DuplicateId(RequestId),
    DeadlineNotAfterArrival(RequestId),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a scheduling snapshot for FIFO layer order, layer range and id
/// uniqueness. Report-only.
pub fn validate_request_set<T: Scalar>(requests: &[Request<T>], profile: &DnnProfile) -> ValidationReport {
    let n_layers = profile.num_layers();
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    for r in requests {
        if !seen.insert(r.id) {
            report.violations.push(Violation::DuplicateId(r.id));
        }
        if r.layer == 0 || r.layer > n_layers + 1 {
            report.violations.push(Violation::LayerOutOfRange { id: r.id, layer: r.layer });
        }
        if !(r.deadline > r.arrival) {
            report.violations.push(Violation::DeadlineNotAfterArrival(r.id));
        }
    }
    let mut sorted: Vec<&Request<T>> = requests.iter().collect();
    sorted.sort_by(|a, b| arrival_order(a, b));
    for w in sorted.windows(2) {
        let (earlier, later) = (w[0], w[1]);
        if later.layer > earlier.layer {
            report.violations.push(Violation::Fifo {
                earlier: earlier.id,
                later: later.id,
                earlier_layer: earlier.layer,
                later_layer: later.layer,
            });
        }
    }
    report
}

/// A group of requests executed together from its shallowest member's layer
/// to the end of the DNN without interruption.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<T> {
    pub dnn: DnnId,
    /// Requests of `dnn`, in arrival order.
    pub members: Vec<RequestId>,
    /// Requests of other DNNs batched in while the sweep crosses shared layers.
    pub absorbed: Vec<RequestId>,
    pub start_layer: usize,
    pub max_batch: usize,
    pub duration: T,
    /// Offset of the segment end from the start of the schedule.
    pub finish_offset: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    /// Execution order.
    pub segments: Vec<Segment<T>>,
    /// Completion offset of every scheduled request from the schedule start.
    pub predicted_completion: BTreeMap<RequestId, T>,
    /// Sum of predicted completion offsets.
    pub objective: T,
    /// Requests predicted to miss their deadline; deadline-aware schedulers
    /// leave them out of `segments` or flag them for dropping.
    pub tardy: Vec<RequestId>,
}

impl<T: Scalar> Schedule<T> {
    pub fn empty() -> Self {
        Schedule {
            segments: Vec::new(),
            predicted_completion: BTreeMap::new(),
            objective: T::zero(),
            tardy: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn tardy_count(&self) -> usize {
        self.tardy.len()
    }

    pub fn makespan(&self) -> T {
        self.segments.last().map(|s| s.finish_offset).unwrap_or_else(T::zero)
    }

    /// Member ids of every segment, in execution order.
    pub fn segment_ids(&self) -> Vec<Vec<RequestId>> {
        self.segments.iter().map(|s| s.members.clone()).collect()
    }

    pub fn scheduled_count(&self) -> usize {
        self.segments.iter().map(|s| s.members.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Location {
    Server,
    ClientFull,
    /// First `k` layer groups ran on the client.
    ClientPartial(usize),
}

impl Location {
    pub fn label(&self) -> &'static str {
        match self {
            Location::Server => "server",
            Location::ClientFull => "client-full",
            Location::ClientPartial(_) => "client-partial",
        }
    }

    pub fn offload_k(&self) -> Option<usize> {
        match self {
            Location::ClientPartial(k) => Some(*k),
            _ => None,
        }
    }
}

/// Final record of one request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome<T> {
    pub id: RequestId,
    pub dnn: DnnId,
    /// Generation time.
    pub arrival: T,
    pub deadline: T,
    /// Absolute completion time; `None` for dropped requests.
    pub completion: Option<T>,
    pub on_time: bool,
    pub location: Location,
    pub network_delay: T,
    pub server_time: T,
    pub client_time: T,
}

impl<T: Scalar> RequestOutcome<T> {
    pub fn dropped(&self) -> bool {
        self.completion.is_none()
    }

    /// End-to-end latency from generation.
    pub fn latency(&self) -> Option<T> {
        self.completion.map(|c| c - self.arrival)
    }
}
