//! Error taxonomy shared across the crate.
//!
//! Three coarse classes matter to callers (the CLI maps them to exit
//! codes): configuration problems, violated model invariants, and
//! numerical failures during integration or solving.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario file rejected. `line` is 1-based when known.
    #[error("config{}: {message}", fmt_location(.line, .key))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    /// A physical parameter or argument violates its documented domain.
    #[error("invalid {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Step-response estimation failed (non-monotone or unsettled series).
    #[error("step response estimation: {0}")]
    Estimation(String),

    /// Reduced-model fit missed the quality target.
    #[error("identification: fit error {rms_c:.3} C rms exceeds {limit_c:.3} C")]
    Identification { rms_c: f64, limit_c: f64 },

    /// Controller produced or received a non-finite signal.
    #[error("actuation: {0}")]
    Actuation(String),

    /// Calibration search finished without meeting its targets.
    #[error("calibration infeasible: {0}")]
    Calibration(String),

    /// Capacitance baseline window looks contaminated by contact.
    #[error("capsense recalibration rejected: {0}")]
    CapsenseRejected(String),

    /// Integration produced a non-finite or wildly out-of-range state.
    #[error("numerics at t = {t_s:.3} s, {node}: {message}")]
    Numerics {
        t_s: f64,
        node: String,
        message: String,
    },

    /// Linear system could not be solved (singular matrix).
    #[error("linear solve: {0}")]
    LinearSolve(String),
}

impl Error {
    /// Coarse class used for exit codes and machine-readable records.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } => ErrorKind::Config,
            Error::Numerics { .. } | Error::LinearSolve(_) => ErrorKind::Numerical,
            _ => ErrorKind::Invariant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Invariant,
    Numerical,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Invariant => "invariant",
            ErrorKind::Numerical => "numerical",
        }
    }
}

fn fmt_location(line: &Option<usize>, key: &Option<String>) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!(" (line {l}, key `{k}`)"),
        (Some(l), None) => format!(" (line {l})"),
        (None, Some(k)) => format!(" (key `{k}`)"),
        (None, None) => String::new(),
    }
}
