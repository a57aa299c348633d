use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("QND coupling needs two distinct modes, got mode {0} twice")]
    SameMode(usize),

    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("invalid secret qumode: {0}")]
    InvalidSecret(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid player subset: {0}")]
    InvalidSubset(String),

    #[error("shear formulation needs a nonzero position scale (alpha = 0)")]
    ZeroShearScale,

    #[error("shots must be at least 1")]
    NoShots,

    #[error("threshold (k={k}, n={n}) requires n/2 < k <= n")]
    InvalidThreshold { k: usize, n: usize },

    #[error("no design passed verification after {attempts} attempts")]
    AttemptsExhausted { attempts: usize },

    #[error("design failed verification: {0}")]
    VerificationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
