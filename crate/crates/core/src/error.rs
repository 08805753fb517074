use std::io;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} does not fit the fixed-point range at {precision_bits} fractional bits")]
    EncodeOverflow { value: f64, precision_bits: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("fixed-point scale mismatch: 2^{lhs} vs 2^{rhs}")]
    ScaleMismatch { lhs: u32, rhs: u32 },

    #[error("invalid source rank {src} for world size {world_size}")]
    InvalidSrc { src: usize, world_size: usize },

    #[error("invalid rank {rank} for world size {world_size}")]
    InvalidRank { rank: usize, world_size: usize },

    #[error("division by zero")]
    ZeroDivisor,

    #[error("peer {0} disconnected")]
    PeerDisconnected(usize),

    #[error("timed out waiting for peer {0}")]
    Timeout(usize),

    #[error("protocol desync: {0}")]
    Desync(String),

    #[error("dealer unavailable: {0}")]
    DealerUnavailable(String),

    #[error("empty input")]
    EmptyInput,

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
