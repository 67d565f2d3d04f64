//! Splitting files into stripes of fixed-size chunks and putting them back.

use bytes::Bytes;

use super::{ErasureError, ReedSolomon};
use crate::hash::{ChunkHash, Digest};

/// Default chunk size: 1 MB.
pub const DEFAULT_CHUNK_SIZE: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    /// Position within the stripe, `0..n`.
    pub index: usize,
    pub data: Bytes,
    pub hash: ChunkHash,
}

impl Chunk {
    pub fn new(index: usize, data: Bytes) -> Self {
        let hash = Digest::of(&data);
        Chunk { index, data, hash }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripe {
    pub index: usize,
    pub chunks: Vec<Chunk>,
    pub stripe_hash: Digest,
}

/// Digest of a stripe: over its chunk hashes in index order.
pub fn stripe_hash<'a, I: IntoIterator<Item = &'a ChunkHash>>(chunk_hashes: I) -> Digest {
    Digest::of_parts(chunk_hashes.into_iter().map(|h| &h.as_bytes()[..]))
}

/// Data chunk groups of a file, before encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// One entry per stripe, each holding exactly k chunks of `chunk_size` bytes.
    pub groups: Vec<Vec<Bytes>>,
    pub original_length: u64,
}

/// Splits `data` into `ceil(len / (k * chunk_size))` groups of k chunks. The
/// last group is zero padded.
pub fn partition_file(data: &Bytes, chunk_size: usize, k: usize) -> Partition {
    assert!(chunk_size > 0 && k > 0, "chunk size and k must be positive");
    let stripe_bytes = chunk_size * k;
    let stripes = data.len().div_ceil(stripe_bytes);
    let groups = (0..stripes)
        .map(|s| {
            (0..k)
                .map(|c| {
                    let start = s * stripe_bytes + c * chunk_size;
                    let end = (start + chunk_size).min(data.len());
                    if end - start.min(end) == chunk_size {
                        data.slice(start..end)
                    } else {
                        let mut padded = vec![0u8; chunk_size];
                        if start < end {
                            padded[..end - start].copy_from_slice(&data[start..end]);
                        }
                        Bytes::from(padded)
                    }
                })
                .collect()
        })
        .collect();
    Partition {
        groups,
        original_length: data.len() as u64,
    }
}

/// Encodes one group of k data chunks into a full stripe of n chunks.
pub fn encode_stripe(
    codec: &ReedSolomon,
    index: usize,
    data_chunks: Vec<Bytes>,
) -> Result<Stripe, ErasureError> {
    let chunks: Vec<Chunk> = codec
        .encode(data_chunks)?
        .into_iter()
        .enumerate()
        .map(|(i, data)| Chunk::new(i, data))
        .collect();
    let stripe_hash = stripe_hash(chunks.iter().map(|c| &c.hash));
    Ok(Stripe {
        index,
        chunks,
        stripe_hash,
    })
}

/// Recovers the k data chunks of a stripe from any k available chunks.
pub fn decode_stripe(
    codec: &ReedSolomon,
    available: Vec<(usize, Bytes)>,
) -> Result<Vec<Bytes>, ErasureError> {
    codec.decode(available)
}

/// Concatenates decoded stripes and truncates to the original length.
/// `stripes[i]` is `None` when stripe i could not be decoded.
pub fn reassemble_file(
    stripes: &[Option<Vec<Bytes>>],
    original_length: u64,
) -> Result<Bytes, ErasureError> {
    let mut out = Vec::with_capacity(original_length as usize);
    for (i, stripe) in stripes.iter().enumerate() {
        let chunks = stripe.as_ref().ok_or(ErasureError::MissingStripe(i))?;
        for chunk in chunks {
            out.extend_from_slice(chunk);
        }
    }
    if (out.len() as u64) < original_length {
        return Err(ErasureError::Truncated {
            have: out.len() as u64,
            need: original_length,
        });
    }
    out.truncate(original_length as usize);
    Ok(Bytes::from(out))
}
