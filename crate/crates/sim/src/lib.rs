//! Trace-driven simulation of an edge inference server and its clients.
//!
//! [`workload`] generates requests, [`network`] turns payloads into transfer
//! delays, [`offload`] decides what clients keep, [`engine`] runs the server
//! layer by layer under a chosen scheduler, and [`metrics`] / [`report`]
//! summarise and emit the results.

// `!(a > b)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod network;
pub mod offload;
pub mod report;
pub mod workload;

pub use config::{resolve, Overrides, RunFile};
pub use engine::{
    run_sim, simulate, ClientSetup, Granularity, SchedulerKind, SimConfig, SimResult, SimStats, StepRecord, Workload,
    SNAPSHOT_CAP,
};
pub use error::SimError;
pub use metrics::{capacity_of, capacity_sweep, summarize, sweep_grid, CapacityCurve, SummaryMetrics, SweepPoint};
pub use network::{scale_trace, transmission_delay, NetworkTrace};
pub use offload::{
    decide_binary, decide_partial, ewma_update, BinaryInput, Client, ClientProfile, NetworkEstimator, OffloadMode,
    PartialInput, PartialRule, Placement, ServerView,
};
pub use workload::{generate_arrivals, Arrival, ArrivalProcess, SizeModel, WorkloadSpec};
