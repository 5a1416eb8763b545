use std::io;

use thiserror::Error;

use crate::correlated::CorrelationKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ring width {0} is not supported (expected 1..=64 bits)")]
    UnsupportedWidth(u32),

    #[error("value {value} does not fit the signed range of a {bits}-bit ring")]
    OutOfRange { value: i128, bits: u32 },

    #[error("both shares claim to belong to party {0}")]
    PartyCollision(u8),

    #[error("invalid party id {0} (expected 1 or 2)")]
    InvalidParty(u8),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("ring width mismatch: expected {expected} bits, found {found}")]
    WidthMismatch { expected: u32, found: u32 },

    #[error("{kind} exhausted: requested {requested}, {remaining} left")]
    RandomnessExhausted {
        kind: CorrelationKind,
        requested: usize,
        remaining: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("domain bound violated: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("protocol version mismatch: local {local}, remote {remote}")]
    VersionMismatch { local: u64, remote: u64 },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("channel closed by peer")]
    ChannelClosed,

    #[error("network error: {0}")]
    Network(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
