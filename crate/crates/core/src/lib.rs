//! Batching-aware scheduling of layered DNN inference requests.
//!
//! Requests move through a DNN one layer at a time. Requests waiting at the
//! same layer can run as one batch, which costs far less than running them
//! one by one. The schedulers here decide which requests to batch:
//!
//! * [`batch`]: the segment DP minimising total completion time, its faster
//!   restricted forms, an incremental variant, and the two baselines.
//! * [`deadline`]: batching EDF and a DP minimising the number of late jobs.
//! * [`multi`]: several DNNs, including batching across shared components.
//! * [`oracle`]: exhaustive reference solvers for testing all of the above.
//!
//! All scheduling math is generic over [`Scalar`]; use the `f64` aliases for
//! simulation and [`Exact`] for bit-exact checks.

// `!(a > b)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod batch;
pub mod deadline;
pub mod error;
pub mod model;
pub mod multi;
pub mod oracle;
pub mod profile;
pub mod scalar;
mod sweep;

pub use batch::{
    baseline_batch, baseline_no_batch, compute_schedule, compute_schedule_grouped, compute_schedule_layer_units, cost,
    incremental_update, segment_duration, DpTable, SegmentSweep, Timed, UpdateStats,
};
pub use deadline::{drop_expired, edf_batch, tardy_dp, tardy_dp_with};
pub use error::{ModelError, ProfileError, SchedError};
pub use model::{
    validate_request_set, DnnId, Location, Origin, Request, RequestId, RequestOutcome, RequestState, Schedule, Segment,
    ValidationReport, Violation,
};
pub use multi::{reschedule_trigger, schedule_multi, schedule_multi_shared, MultiConfig, Search, TriggerEvent};
pub use profile::{
    check_subadditivity, group_layers, load_profile, lookup_h, ComponentId, CostTable, DnnProfile, LayerGroups,
    ProfileSet, SharedComponent, StageRef,
};
pub use scalar::Scalar;
pub use sweep::Split;

/// Exact rational time, for checks that must not round.
pub type Exact = num_rational::Ratio<i64>;

pub type Request64 = Request<f64>;
pub type Schedule64 = Schedule<f64>;
pub type CostTable64 = CostTable<f64>;
pub type ProfileSet64 = ProfileSet<f64>;
pub type Outcome64 = RequestOutcome<f64>;

pub type Request32 = Request<f32>;
pub type CostTable32 = CostTable<f32>;

pub type RequestExact = Request<Exact>;
pub type CostTableExact = CostTable<Exact>;
