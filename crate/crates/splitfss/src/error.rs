use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fixed-point config: {0}")]
    Config(String),

    #[error("fixed-point overflow: {value} outside representable range of {bits}-bit ring with {frac} fractional bits")]
    Overflow { value: f64, bits: u32, frac: u32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Key(#[from] KeyError),

    #[error(transparent)]
    Frame(#[from] FrameError),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("hyperparameter digest mismatch: ours {ours:#018x}, peer {theirs:#018x}")]
    SyncDigest { ours: u64, theirs: u64 },

    #[error("dealer material: {0}")]
    Material(String),

    #[error("dataset: {0}")]
    Dataset(String),
}

/// Decoding errors for the canonical FSS key byte layout.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("key buffer too short: {got} bytes, need at least {need}")]
    Truncated { got: usize, need: usize },
    #[error("bad party tag {0}, expected 0 or 1")]
    BadParty(u8),
    #[error("bad domain_bits {0}, expected 1..=64")]
    BadDomain(u8),
    #[error("key buffer length {got} does not match layout length {expected} for domain_bits {domain_bits}")]
    BadLength {
        got: usize,
        expected: usize,
        domain_bits: u8,
    },
    #[error("bad control-bit byte {0:#04x}, expected 0 or 1")]
    BadBit(u8),
}

/// Errors raised while decoding a wire frame.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {got}, expected {expected}")]
    Version { got: u8, expected: u8 },
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("payload length {0} exceeds the 1 GiB frame limit")]
    Oversize(u64),
    #[error("frame truncated: {got} bytes, need {need}")]
    Truncated { got: usize, need: usize },
    #[error("received session id {got:#018x}, channel is bound to {bound:#018x}")]
    SessionMismatch { got: u64, bound: u64 },
    #[error("expected message type {expected:?}, got {got:?}")]
    UnexpectedType { expected: String, got: String },
    #[error("malformed payload: {0}")]
    Payload(String),
}

/// Errors raised while parsing IDX-format dataset files.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic {0:#010x}")]
    BadMagic(u32),
    #[error("IDX file truncated: {got} bytes, need {need}")]
    Truncated { got: usize, need: usize },
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("label {0} outside 0..=9")]
    BadLabel(u8),
    #[error("file size {got} does not match the canonical {expected} bytes for {name}")]
    Checksum {
        name: String,
        got: u64,
        expected: u64,
    },
}
