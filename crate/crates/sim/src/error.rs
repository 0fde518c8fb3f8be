use thiserror::Error;

use layerbatch_core::{DnnId, ProfileError, RequestId, SchedError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error("workload names dnn `{0}`, which the profile does not define")]
    UnknownDnn(DnnId),
    #[error("step of `{dnn}` at layer {layer} would batch {batch} requests, above the bound {bound}")]
    BatchOverflow { dnn: DnnId, layer: usize, batch: usize, bound: usize },
    #[error("request {0} was scheduled but is not pending on the server")]
    NotPending(RequestId),
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("invalid client profile: {0}")]
    Client(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl SimError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SimError::Io { path: path.as_ref().display().to_string(), source }
    }
}
