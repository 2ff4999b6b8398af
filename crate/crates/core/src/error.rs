use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    Dimension {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite value produced by layer {layer} ({kind})")]
    NumericOverflow { layer: usize, kind: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("chain {chain} diverged at step {step}")]
    ChainDivergence { chain: usize, step: usize },

    #[error("training aborted at step {step} (last checkpoint: {last_checkpoint:?}): {source}")]
    TrainingAborted {
        step: usize,
        last_checkpoint: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid potential spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("requested {requested} slots from a bank of capacity {capacity}")]
    Capacity { requested: usize, capacity: usize },

    #[error("bad slot index: {0}")]
    Index(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("bandwidth error: {0}")]
    Bandwidth(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable, machine-parsable class name used by the command line runner.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::NumericOverflow { .. } | Error::NonFinite(_) => "numeric",
            Error::ChainDivergence { .. } => "chain-divergence",
            Error::TrainingAborted { .. } => "training-aborted",
            Error::Precondition(_) => "precondition",
            Error::Spec(_) => "spec",
            Error::Config(_) => "config",
            Error::Capacity { .. } => "capacity",
            Error::Index(_) => "index",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::Bandwidth(_) => "bandwidth",
            Error::Dataset(_) => "dataset",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn dim(context: &'static str, expected: &[usize], found: &[usize]) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
