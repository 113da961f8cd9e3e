use std::path::PathBuf;

use thiserror::Error;

use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] magpend_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Trajectory(String),
    /// The loop left the admissible angle range; the trace runs up to the offending step.
    #[error("simulation diverged at t = {t} s: {detail}")]
    Diverged { t: f64, detail: String, trace: Box<Trace> },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
