//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

/// Top-level error for all library operations.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Tensor shapes do not satisfy an operation's contract.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// An API contract was violated (non-scalar loss, missing gradient, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Audio input shorter than an operation requires.
    #[error("insufficient audio: {0}")]
    InsufficientAudio(String),

    /// Invalid run configuration (empty dataset, bad plan, bad flag combination).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),

    #[error("decode error: {0}")]
    Decode(#[from] DecodeError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors decoding the binary weights format.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic (expected \"FCW1\")")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated buffer")]
    Truncated,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid dtype tag {0}")]
    InvalidDtype(u8),
    #[error("dtype mismatch: file holds {found}, caller expects {expected}")]
    DtypeMismatch { found: &'static str, expected: &'static str },
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("malformed entry: {0}")]
    Malformed(String),
}

/// Errors in the federation wire protocol and round orchestration.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("frame of {len} bytes exceeds maximum {max}")]
    FrameTooLarge { len: usize, max: usize },
    #[error("unknown message type {0}")]
    UnknownMessageType(u8),
    #[error("unexpected message: {0}")]
    UnexpectedMessage(String),
    #[error("malformed message body: {0}")]
    MalformedBody(String),
    #[error("round {round}: no update from clients {missing:?}")]
    Straggler { round: u32, missing: Vec<String> },
    #[error("duplicate client id {0:?} in one round")]
    DuplicateClient(String),
    #[error("shape-incompatible update from {client_id:?}: {detail}")]
    ShapeIncompatible { client_id: String, detail: String },
    #[error("round mismatch: expected {expected}, got {got}")]
    RoundMismatch { expected: u32, got: u32 },
    #[error("connection closed")]
    ConnectionClosed,
    #[error("timed out waiting for a message")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
}
