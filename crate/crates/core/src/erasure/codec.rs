//! Systematic (n, k) Reed-Solomon code over GF(2^8).
//!
//! The generator matrix is the k x k identity stacked on an (n - k) x k
//! Cauchy matrix. Every square submatrix of a Cauchy matrix is invertible,
//! so any k rows of the generator are invertible and any k chunks decode.

use bytes::Bytes;

use super::gf256;
use super::ErasureError;

#[derive(Debug, Clone)]
pub struct ReedSolomon {
    total: usize,
    data: usize,
    /// Rows k..n of the generator.
    parity_rows: Vec<Vec<u8>>,
}

impl ReedSolomon {
    pub fn new(total: usize, data: usize) -> Result<Self, ErasureError> {
        if data == 0 || data >= total || total > 256 {
            return Err(ErasureError::InvalidShape { n: total, k: data });
        }
        // x_i = k + i for parity rows, y_j = j for data columns; all distinct.
        let parity_rows = (0..total - data)
            .map(|i| {
                (0..data)
                    .map(|j| gf256::inv(((data + i) ^ j) as u8))
                    .collect()
            })
            .collect();
        Ok(ReedSolomon {
            total,
            data,
            parity_rows,
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn data(&self) -> usize {
        self.data
    }

    /// Row `index` of the generator matrix.
    pub fn generator_row(&self, index: usize) -> Vec<u8> {
        if index < self.data {
            (0..self.data).map(|c| u8::from(c == index)).collect()
        } else {
            self.parity_rows[index - self.data].clone()
        }
    }

    /// Computes the n - k parity chunks for `data` (exactly k equal-length chunks).
    pub fn encode_parity(&self, data: &[Bytes]) -> Result<Vec<Bytes>, ErasureError> {
        if data.len() != self.data {
            return Err(ErasureError::WrongChunkCount {
                expected: self.data,
                got: data.len(),
            });
        }
        let len = data[0].len();
        if data.iter().any(|c| c.len() != len) {
            return Err(ErasureError::UnequalLengths);
        }
        Ok(self
            .parity_rows
            .iter()
            .map(|row| {
                let mut out = vec![0u8; len];
                for (coef, chunk) in row.iter().zip(data) {
                    gf256::mul_add_slice(*coef, chunk, &mut out);
                }
                Bytes::from(out)
            })
            .collect())
    }

    /// Encodes k data chunks into all n chunks; the first k are the inputs.
    pub fn encode(&self, data: Vec<Bytes>) -> Result<Vec<Bytes>, ErasureError> {
        let parity = self.encode_parity(&data)?;
        let mut all = data;
        all.extend(parity);
        Ok(all)
    }

    /// Recovers the k data chunks from any k or more `(index, chunk)` pairs.
    ///
    /// Only the first k distinct indices are used. Chunks that are already
    /// data chunks are returned as-is.
    pub fn decode(&self, available: Vec<(usize, Bytes)>) -> Result<Vec<Bytes>, ErasureError> {
        let mut picked: Vec<(usize, Bytes)> = Vec::with_capacity(self.data);
        for (index, chunk) in available {
            if index >= self.total {
                return Err(ErasureError::InvalidIndex {
                    index,
                    n: self.total,
                });
            }
            if picked.iter().any(|(i, _)| *i == index) {
                return Err(ErasureError::DuplicateIndex(index));
            }
            if picked.len() < self.data {
                picked.push((index, chunk));
            }
        }
        if picked.len() < self.data {
            return Err(ErasureError::Unrecoverable {
                have: picked.len(),
                need: self.data,
            });
        }
        let len = picked[0].1.len();
        if picked.iter().any(|(_, c)| c.len() != len) {
            return Err(ErasureError::UnequalLengths);
        }

        let mut out: Vec<Option<Bytes>> = vec![None; self.data];
        for (index, chunk) in &picked {
            if *index < self.data {
                out[*index] = Some(chunk.clone());
            }
        }
        if out.iter().all(Option::is_some) {
            return Ok(out.into_iter().flatten().collect());
        }

        let matrix: Vec<Vec<u8>> = picked.iter().map(|(i, _)| self.generator_row(*i)).collect();
        let inverse = gf256::invert(matrix).ok_or(ErasureError::Singular)?;
        for (missing, slot) in out.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let mut buf = vec![0u8; len];
            for (coef, (_, chunk)) in inverse[missing].iter().zip(&picked) {
                gf256::mul_add_slice(*coef, chunk, &mut buf);
            }
            *slot = Some(Bytes::from(buf));
        }
        Ok(out.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_chunks(rng: &mut ChaCha8Rng, k: usize, len: usize) -> Vec<Bytes> {
        (0..k)
            .map(|_| {
                let mut v = vec![0u8; len];
                rng.fill_bytes(&mut v);
                Bytes::from(v)
            })
            .collect()
    }

    /// Bitwise GF(2^8) multiply, kept apart from the table implementation.
    fn oracle_mul(mut a: u8, mut b: u8) -> u8 {
        let mut acc = 0;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let hi = a & 0x80;
            a <<= 1;
            if hi != 0 {
                a ^= 0x1d;
            }
            b >>= 1;
        }
        acc
    }

    fn oracle_inv(a: u8) -> u8 {
        (1..=255u8).find(|&b| oracle_mul(a, b) == 1).unwrap()
    }

    #[test]
    fn parity_matches_cauchy_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rs = ReedSolomon::new(6, 3).unwrap();
        let data = random_chunks(&mut rng, 3, 64);
        let parity = rs.encode_parity(&data).unwrap();
        for (i, p) in parity.iter().enumerate() {
            for b in 0..64 {
                let mut expect = 0u8;
                for (j, d) in data.iter().enumerate() {
                    let coef = oracle_inv(((3 + i) ^ j) as u8);
                    expect ^= oracle_mul(coef, d[b]);
                }
                assert_eq!(p[b], expect);
            }
        }
    }

    #[test]
    fn zero_stripe_encodes_to_zero() {
        let rs = ReedSolomon::new(6, 3).unwrap();
        let all = rs.encode(vec![Bytes::from(vec![0u8; 32]); 3]).unwrap();
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|c| c.iter().all(|&b| b == 0)));
    }

    #[test]
    fn single_data_chunk_replicates() {
        let rs = ReedSolomon::new(2, 1).unwrap();
        let data = Bytes::from_static(b"replicate me");
        let all = rs.encode(vec![data.clone()]).unwrap();
        assert_eq!(all[1], data);
    }

    #[test]
    fn decode_from_parity_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rs = ReedSolomon::new(6, 3).unwrap();
        let data = random_chunks(&mut rng, 3, 1000);
        let all = rs.encode(data.clone()).unwrap();
        let got = rs
            .decode((3..6).map(|i| (i, all[i].clone())).collect())
            .unwrap();
        assert_eq!(got, data);
    }

    #[test]
    fn every_subset_decodes_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rs = ReedSolomon::new(6, 3).unwrap();
        let data = random_chunks(&mut rng, 3, 257);
        let all = rs.encode(data.clone()).unwrap();
        let mut subsets = 0;
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    let got = rs
                        .decode(vec![
                            (c, all[c].clone()),
                            (a, all[a].clone()),
                            (b, all[b].clone()),
                        ])
                        .unwrap();
                    assert_eq!(got, data, "subset {a},{b},{c}");
                    subsets += 1;
                }
            }
        }
        assert_eq!(subsets, 20);
    }

    #[test]
    fn below_threshold_is_unrecoverable() {
        let rs = ReedSolomon::new(6, 3).unwrap();
        let all = rs.encode(vec![Bytes::from(vec![1u8; 8]); 3]).unwrap();
        let err = rs
            .decode(vec![(0, all[0].clone()), (4, all[4].clone())])
            .unwrap_err();
        assert_eq!(err, ErasureError::Unrecoverable { have: 2, need: 3 });
    }

    #[test]
    fn rejects_bad_inputs() {
        let rs = ReedSolomon::new(6, 3).unwrap();
        let unequal = vec![
            Bytes::from(vec![0u8; 4]),
            Bytes::from(vec![0u8; 4]),
            Bytes::from(vec![0u8; 5]),
        ];
        assert_eq!(
            rs.encode(unequal).unwrap_err(),
            ErasureError::UnequalLengths
        );
        assert!(matches!(
            rs.decode(vec![
                (1, Bytes::new()),
                (1, Bytes::new()),
                (2, Bytes::new())
            ]),
            Err(ErasureError::DuplicateIndex(1))
        ));
        assert!(ReedSolomon::new(3, 3).is_err());
        assert!(ReedSolomon::new(300, 3).is_err());
    }

    #[test]
    fn larger_code_sampled_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rs = ReedSolomon::new(14, 10).unwrap();
        let data = random_chunks(&mut rng, 10, 100);
        let all = rs.encode(data.clone()).unwrap();
        for _ in 0..50 {
            let mut idx: Vec<usize> = (0..14).collect();
            // Fisher-Yates with the test rng.
            for i in (1..idx.len()).rev() {
                let j = (rng.next_u32() as usize) % (i + 1);
                idx.swap(i, j);
            }
            let pick = idx[..10].iter().map(|&i| (i, all[i].clone())).collect();
            assert_eq!(rs.decode(pick).unwrap(), data);
        }
    }
}
