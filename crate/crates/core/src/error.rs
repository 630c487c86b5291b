use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An operand has the wrong extent along a named dimension.
    #[error("{op}: shape mismatch in {dim}: {detail}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        detail: String,
    },
    #[error("{0}")]
    InvalidArgument(String),
    /// Sequence length the generator cannot process.
    #[error("sequence length {got} is not usable: {reason}; smallest valid padded length is {padded}")]
    Length {
        got: usize,
        padded: usize,
        reason: &'static str,
    },
    #[error("non-finite value in {term} at iteration {iteration}")]
    NonFinite { iteration: u64, term: String },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, dim: &'static str, detail: String) -> Error {
    Error::Shape { op, dim, detail }
}
