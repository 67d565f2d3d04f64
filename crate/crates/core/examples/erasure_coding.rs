//! Encode a file into (6,3) stripes, lose half of one stripe, decode it back.

use bytes::Bytes;
use dbnode::erasure::{encode_stripe, partition_file, reassemble_file, ReedSolomon};

fn main() {
    let text = Bytes::from_static(
        b"Consortium members share files without trusting a single storage provider.",
    );
    let codec = ReedSolomon::new(6, 3).unwrap();
    let partition = partition_file(&text, 16, 3);
    let stripes: Vec<_> = partition
        .groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| encode_stripe(&codec, i, g).unwrap())
        .collect();
    println!(
        "{} bytes -> {} stripes of 6 chunks",
        text.len(),
        stripes.len()
    );

    let decoded: Vec<_> = stripes
        .iter()
        .map(|s| {
            // Keep only chunks 1, 4 and 5: one data chunk and two parity chunks.
            let survivors = [1, 4, 5].map(|i| (i, s.chunks[i].data.clone())).to_vec();
            Some(codec.decode(survivors).unwrap())
        })
        .collect();
    let back = reassemble_file(&decoded, partition.original_length).unwrap();
    assert_eq!(back, text);
    println!("recovered: {}", String::from_utf8_lossy(&back));
}
