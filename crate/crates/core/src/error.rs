use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("grid mismatch{}: {detail}", .trajectory.map(|id| format!(" in trajectory {id}")).unwrap_or_default())]
    GridMismatch {
        trajectory: Option<u64>,
        detail: String,
    },

    #[error("{path}: parse error at {locus}: {message}")]
    DataParse {
        path: PathBuf,
        locus: String,
        message: String,
    },

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("malformed interval [{lo}, {hi}]")]
    MalformedInterval { lo: f64, hi: f64 },

    #[error("insufficient horizon: evaluation at sample {tau} needs samples the signal of length {len} does not have")]
    InsufficientHorizon { tau: usize, len: usize },

    #[error("predicate references dimension x{dim} but the signal has {signal_dim} dimension(s)")]
    DimensionOutOfRange { dim: usize, signal_dim: usize },

    #[error("empty score set")]
    EmptyScores,

    #[error("score {score} lies outside the support [{lo}, {hi}]")]
    OutsideSupport { score: f64, lo: f64, hi: f64 },

    #[error("vacuous guarantee: failure probabilities sum to {0} >= 1")]
    VacuousGuarantee(f64),

    #[error("could not sample two distinct inputs after {0} retries")]
    DegenerateInputSample(usize),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
