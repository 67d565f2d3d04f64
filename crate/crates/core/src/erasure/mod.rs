//! Reed-Solomon coding of files into stripes, and the consortium code
//! parameters that decide how much failure a deployment survives.

mod codec;
pub mod gf256;
mod layout;
mod params;

use thiserror::Error;

pub use codec::ReedSolomon;
pub use layout::{
    decode_stripe, encode_stripe, partition_file, reassemble_file, stripe_hash, Chunk, Partition,
    Stripe, DEFAULT_CHUNK_SIZE,
};
pub use params::{CodeParams, Constraint, ParamsError, ValidationReport, Violation};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ErasureError {
    #[error("invalid code shape (n={n}, k={k}): need 1 <= k < n <= 256")]
    InvalidShape { n: usize, k: usize },
    #[error("expected {expected} data chunks, got {got}")]
    WrongChunkCount { expected: usize, got: usize },
    #[error("chunks of one stripe must have equal length")]
    UnequalLengths,
    #[error("chunk index {index} out of range for n={n}")]
    InvalidIndex { index: usize, n: usize },
    #[error("chunk index {0} supplied twice")]
    DuplicateIndex(usize),
    #[error("unrecoverable stripe: {have} chunks available, {need} required")]
    Unrecoverable { have: usize, need: usize },
    #[error("decoding matrix is singular")]
    Singular,
    #[error("stripe {0} is missing")]
    MissingStripe(usize),
    #[error("decoded data holds {have} bytes, file needs {need}")]
    Truncated { have: u64, need: u64 },
}
