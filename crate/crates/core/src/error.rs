use thiserror::Error;

/// Errors raised by the game model, solvers and learners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("state index {state} out of range (game has {num_states} states)")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("action index {action} out of range for DM {dm} ({num_actions} actions)")]
    ActionOutOfRange {
        dm: usize,
        action: usize,
        num_actions: usize,
    },

    #[error("DM index {dm} out of range (game has {num_dms} DMs)")]
    DmOutOfRange { dm: usize, num_dms: usize },

    #[error("experimentation probability must lie in (0, 1), got {0}")]
    InvalidRho(f64),

    #[error("policy enumeration needs {size} entries, above the cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("game file: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
