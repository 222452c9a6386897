use thiserror::Error;

use crate::time::Instant;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot schedule at {fire_at} from clock {clock}")]
    SchedulingInPast { fire_at: Instant, clock: Instant },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no closed form for {0}; use the empirical estimator")]
    Unsupported(String),

    #[error("empty sample")]
    EmptySample,

    #[error("split must lie in (0,1), got {0}")]
    InvalidSplit(f64),

    #[error("need 1 <= K <= M, got K={k}, M={m}")]
    InvalidK { k: usize, m: usize },

    #[error("merged stage can take {merged_max_ns}ns, exceeding the split minimum {split_min_ns}ns")]
    MergedNotDominant { merged_max_ns: u64, split_min_ns: u64 },

    #[error("no deliveries in the measurement window")]
    NoDeliveries,

    #[error("need at least {needed} deliveries, got {got}")]
    InsufficientDeliveries { needed: usize, got: usize },

    #[error("no queries fall inside the measurement window")]
    NoQueriesInWindow,

    #[error("no control loop closed before the horizon")]
    NoClosedLoops,

    #[error("straggler policy excludes every device in round {round}")]
    NoParticipants { round: u32 },

    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),

    #[error("need at least {needed} grid points, got {got}")]
    InsufficientGrid { needed: usize, got: usize },

    #[error("seed {0} appears more than once")]
    DuplicateSeeds(u64),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error, with scenario context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
