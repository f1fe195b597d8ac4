use crate::system::CaseTag;

/// Errors raised by the dimension library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("operation requires a {expected} system, got {actual}")]
    WrongCase {
        expected: &'static str,
        actual: CaseTag,
    },

    #[error("transition matrix is not primitive")]
    NotPrimitive,

    #[error("transition matrix is reducible")]
    Reducible,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration window too large: {m}^{n} words exceeds the guard of 2^{guard_bits}")]
    WindowTooLarge { m: usize, n: usize, guard_bits: u32 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of an iterative method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
