use thiserror::Error;

use crate::bitstore::ProbeMeteredBits;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("sequence is not typical for this spec")]
    NotTypical,

    #[error("index {index} out of range for a set of size {size}")]
    IndexOutOfRange { index: String, size: String },

    #[error("malformed phrase stream: {0}")]
    MalformedStream(String),

    #[error("corrupt codeword: {0}")]
    CorruptCodeword(String),

    #[error("plan infeasible: {0}")]
    PlanInfeasible(String),

    #[error("group has {count} residual blocks but capacity is {capacity}")]
    TooManyResiduals { count: usize, capacity: usize },

    /// The fixed-length encoder could not reduce the message to all-⋄
    /// within the available levels. Carries the codeword built so far.
    #[error("encoding incomplete: residual symbols remain after the top level")]
    EncodingIncomplete { partial: Option<Box<ProbeMeteredBits>> },

    #[error("indicator weight {weight} exceeds density limit {limit}")]
    DensityTooHigh { weight: usize, limit: usize },

    #[error("block {0} is stored in the error form; re-compress the container")]
    BlockErrored(usize),

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported container version {0}")]
    BadVersion(u8),

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report export failed: {0}")]
    Export(String),
}

impl Error {
    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptCodeword(msg.into())
    }

    pub(crate) fn incomplete() -> Self {
        Error::EncodingIncomplete { partial: None }
    }
}
