use thiserror::Error;

/// Errors raised by the codec, scheduler, planner and simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("coefficient vector has length {got}, batch size is {expected}")]
    CoeffLength { expected: usize, got: usize },

    #[error("packet for batch {got} offered to state of batch {expected}")]
    BatchMismatch { expected: u32, got: u32 },

    #[error("batch {0} has no buffered packets to recode")]
    EmptyBuffer(u32),

    #[error("malformed packet: {0}")]
    Wire(String),

    #[error("stopping-time search found no solution below T = {cap}")]
    NoStoppingTime { cap: f64 },

    #[error("livelock guard tripped after {slots} slots ({decoded} of {users} users decoded)")]
    Livelock {
        slots: u64,
        decoded: usize,
        users: usize,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        reason: reason.into(),
    }
}
