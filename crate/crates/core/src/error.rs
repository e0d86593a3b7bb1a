use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall into three families that the command-line front end maps to
/// exit codes: validation (2), IO (3) and numeric failure (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("rule syntax error at byte {offset}: {message}")]
    RuleSyntax { offset: usize, message: String },

    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ablation cell {cell}: {source}")]
    InCell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),

    #[error("candidate pool has {size} rules, above the cap of {cap}; tighten predicate filtering or lower max_predicates")]
    PoolTooLarge { size: usize, cap: usize },

    #[error("non-finite value in {parameter} at epoch {epoch}")]
    NonFinite { parameter: String, epoch: usize },

    #[error("prediction diverged: survival stayed above threshold up to t = {horizon}")]
    DivergentPrediction { horizon: f64 },

    #[error("thinning bound violated at t = {time}: intensity {intensity} > bound {bound}")]
    ThinningBound { time: f64, intensity: f64, bound: f64 },

    #[error("rule mining failed: {0}")]
    MiningFailed(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Format(String),
}

/// Coarse error category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::NonFinite { .. }
            | Error::DivergentPrediction { .. }
            | Error::ThinningBound { .. }
            | Error::MiningFailed(_) => ErrorKind::Numeric,
            Error::AtLine { source, .. } | Error::InCell { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Io => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Error {
        Error::AtLine {
            line,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
