use thiserror::Error;

/// Errors surfaced by the codec toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("quantized symbol {symbol} out of range for {bits}-bit spec")]
    SymbolRange { symbol: i64, bits: u8 },

    #[error("bad magic: expected {:?}, got {:?}", String::from_utf8_lossy(expected), String::from_utf8_lossy(actual))]
    BadMagic { expected: [u8; 4], actual: [u8; 4] },

    #[error("truncated stream: needed {needed}, had {available}")]
    Truncated { needed: usize, available: usize },

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("bundle hash mismatch: stored {stored:016x}, computed {computed:016x}")]
    HashMismatch { stored: u64, computed: u64 },

    #[error("model hash mismatch: stream {stream:016x}, bundle {bundle:016x} (pass force to override)")]
    ModelHashMismatch { stream: u64, bundle: u64 },

    #[error("huffman error: {0}")]
    Huffman(String),

    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
