//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HjbError {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("time {t} outside the control's domain ({lo}, {hi}]")]
    ControlOutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("integration blew up (non-finite state); last valid time {last_time}")]
    Blowup { last_time: f64 },

    #[error("evaluation failure at t={t}, x={x:?}: {what}")]
    EvalFailure { t: f64, x: Vec<f64>, what: String },

    #[error("cell {index} of the approximation grid contains no samples")]
    EmptyCell { index: usize },

    #[error("control search too large: {samples}^{pieces} = {total} combinations (pieces cap {max_pieces}, total cap {max_total})")]
    SearchTooLarge {
        pieces: usize,
        samples: usize,
        total: u128,
        max_pieces: usize,
        max_total: u128,
    },

    #[error("every searched control reaches the target before T1={t1}; pick a smaller T1")]
    AllControlsHitEarly { t1: f64 },

    #[error("report was produced in {found} mode, expected {expected}")]
    ModeMismatch { expected: String, found: String },

    #[error("unknown gallery problem '{0}'")]
    UnknownProblem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HjbError>;
