use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum IpgError {
    /// Malformed or ill-posed input data.
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    /// The MILP engine failed or returned an unusable status.
    #[error("backend error: {0}")]
    Backend(String),

    /// A solver incumbent failed exact re-verification.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A best-response subproblem ran out of time.
    #[error("best-response subproblem for player {player} hit the time limit")]
    OracleTimeout { player: usize },

    #[error("profile space too large: {count} profiles exceed the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },

    /// Broken internal invariant.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = IpgError> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(IpgError::Input(msg.into()))
}
