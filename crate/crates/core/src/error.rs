use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("periodic compounding domain violated for bond {bond}, period {period}: y_t + s_i = {rate}")]
    PeriodicDomain { bond: usize, period: usize, rate: f64 },

    #[error("portfolio has zero value at the nominal market state")]
    ZeroNominalValue,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("uncertainty set is empty")]
    EmptySet,

    #[error("uncertainty set is unbounded along coordinate {0}")]
    UnboundedSet(usize),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("cone solver returned {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}
