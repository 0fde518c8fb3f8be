use thiserror::Error;

use crate::model::{DnnId, RequestId, RequestState};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("request {id} cannot move from layer {from} back to layer {to}")]
    LayerRegression { id: RequestId, from: usize, to: usize },
    #[error("request {id} cannot go from {from:?} to {to:?}")]
    IllegalTransition { id: RequestId, from: RequestState, to: RequestState },
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse profile: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("component `{component}` layer {layer} has no runtime measured at batch size 1")]
    MissingBatchOne { component: String, layer: usize },
    #[error("component `{component}` layer {layer} has non-positive runtime {value} at batch size {batch}")]
    NonPositiveRuntime { component: String, layer: usize, batch: usize, value: f64 },
    #[error("component `{component}` layer {layer} lists batch size 0")]
    ZeroBatch { component: String, layer: usize },
    #[error("component `{0}` has no layers")]
    EmptyComponent(String),
    #[error("duplicate component `{0}`")]
    DuplicateComponent(String),
    #[error("duplicate dnn `{0}`")]
    DuplicateDnn(String),
    #[error("dnn `{dnn}` references unknown component `{component}`")]
    UnknownComponent { dnn: String, component: String },
    #[error("dnn `{dnn}` uses component `{component}` more than once")]
    RepeatedComponent { dnn: String, component: String },
    #[error("dnn `{0}` has no stages")]
    EmptyDnn(String),
    #[error("max_batch must be at least 1")]
    ZeroMaxBatch,
    #[error("cannot split {layers} layers into {groups} groups")]
    TooManyGroups { layers: usize, groups: usize },
    #[error("group count must be at least 1")]
    ZeroGroups,
}

#[derive(Debug, Error, PartialEq)]
pub enum SchedError {
    #[error("no feasible segmentation: {count} requests at layer {layer} exceed the batch bound {bound}")]
    Infeasible { layer: usize, count: usize, bound: usize },
    #[error("request {id} sits at layer {layer}, outside 1..={max}")]
    LayerOutOfRange { id: RequestId, layer: usize, max: usize },
    #[error("unknown dnn `{0}`")]
    UnknownDnn(DnnId),
    #[error("{count} DNNs exceed the exhaustive permutation guard of {max}; use arrival-order search")]
    TooManyDnns { count: usize, max: usize },
}
