//! Two-layer hash slot tables.
//!
//! The inter-organization table splits the 16,384 slots across organizations
//! in proportion to their master node bandwidth; each organization's intra
//! table splits them across its nodes in proportion to storage capacity. A
//! chunk hash picks a slot with CRC-16/XMODEM over its hex text, and the slot
//! picks the organization, then the node.
//!
//! The inter table hands each organization one contiguous range. Intra tables
//! interleave their nodes across the slot space instead: an organization only
//! ever sees the slots of its own inter range, and with contiguous intra
//! ranges that window would reach only some of its nodes.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crc::{Crc, CRC_16_XMODEM};
use thiserror::Error;

use crate::hash::{Digest, DIGEST_HEX_LEN};

pub const SLOT_COUNT: usize = 16_384;

const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_XMODEM);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SlotError {
    #[error("a slot table needs at least one target")]
    NoTargets,
    #[error("target {0:?} has zero weight")]
    ZeroWeight(String),
    #[error("malformed chunk hash {0:?}")]
    MalformedHash(String),
    #[error("malformed slot table text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("slot table for {0} does not match the apportionment of its weights")]
    NotCanonical(String),
}

/// CRC-16/XMODEM of `key`, reduced to a slot index.
pub fn key_slot(key: &[u8]) -> u16 {
    CRC16.checksum(key) % SLOT_COUNT as u16
}

/// Slot of a chunk hash given as its 64-character hex form.
pub fn slot_of(chunk_hash: &str) -> Result<u16, SlotError> {
    if chunk_hash.len() != DIGEST_HEX_LEN || !chunk_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(SlotError::MalformedHash(chunk_hash.to_owned()));
    }
    Ok(key_slot(chunk_hash.as_bytes()))
}

pub fn slot_of_digest(hash: &Digest) -> u16 {
    key_slot(hash.to_hex().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Layer {
    Inter,
    /// Nodes of one organization.
    Intra(String),
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Inter => f.write_str("inter"),
            Layer::Intra(org) => write!(f, "intra {org}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotShare {
    pub target: String,
    pub weight: u64,
    /// Number of slots.
    pub count: u16,
    /// First slot of the target's range; `None` in interleaved tables.
    pub start: Option<u16>,
}

/// An immutable map of all 16,384 slots to targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotTable {
    layer: Layer,
    shares: Vec<SlotShare>,
    owner: Box<[u16]>,
}

/// Largest-remainder apportionment of `SLOT_COUNT` seats over `weights`
/// (already in ascending target order). Ties on the remainder go to the
/// earlier target.
pub fn apportion(weights: &[u64]) -> Vec<u16> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    let seats = SLOT_COUNT as u128;
    let mut counts: Vec<u128> = weights.iter().map(|&w| seats * w as u128 / total).collect();
    let assigned: u128 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Remainders share the denominator `total`, so compare numerators.
    order.sort_by_key(|&i| (std::cmp::Reverse(seats * weights[i] as u128 % total), i));
    for &i in order.iter().take((seats - assigned) as usize) {
        counts[i] += 1;
    }
    counts.into_iter().map(|c| c as u16).collect()
}

impl SlotTable {
    /// Apportions the slots over `weights` and lays them out as contiguous
    /// ranges in ascending target order, or interleaves them for intra tables.
    pub fn allocate(layer: Layer, weights: &BTreeMap<String, u64>) -> Result<Self, SlotError> {
        if weights.is_empty() {
            return Err(SlotError::NoTargets);
        }
        if let Some((target, _)) = weights.iter().find(|(_, w)| **w == 0) {
            return Err(SlotError::ZeroWeight(target.clone()));
        }
        let counts = apportion(&weights.values().copied().collect::<Vec<_>>());
        let interleave = matches!(layer, Layer::Intra(_));
        let mut shares = Vec::with_capacity(weights.len());
        let mut start = 0u16;
        for ((target, &weight), &count) in weights.iter().zip(&counts) {
            shares.push(SlotShare {
                target: target.clone(),
                weight,
                count,
                start: (!interleave).then_some(start),
            });
            start += count;
        }
        let owner = if interleave {
            interleaved_owners(&counts)
        } else {
            counts
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat_n(i as u16, c as usize))
                .collect()
        };
        debug_assert_eq!(owner.len(), SLOT_COUNT);
        Ok(SlotTable {
            layer,
            shares,
            owner: owner.into_boxed_slice(),
        })
    }

    pub fn layer(&self) -> &Layer {
        &self.layer
    }

    pub fn shares(&self) -> &[SlotShare] {
        &self.shares
    }

    pub fn target_of_slot(&self, slot: u16) -> &str {
        &self.shares[self.owner[slot as usize] as usize].target
    }

    pub fn lookup(&self, hash: &Digest) -> &str {
        self.target_of_slot(slot_of_digest(hash))
    }

    pub fn slot_count(&self, target: &str) -> u16 {
        self.shares
            .iter()
            .find(|r| r.target == target)
            .map_or(0, |r| r.count)
    }

    pub fn weights(&self) -> BTreeMap<String, u64> {
        self.shares
            .iter()
            .map(|r| (r.target.clone(), r.weight))
            .collect()
    }

    /// Canonical text: a `layer` line, then one line per target in ascending
    /// order with its weight and its slots, either an inclusive range or a
    /// count for interleaved tables.
    pub fn to_canonical(&self) -> String {
        let mut out = format!("layer {}\n", self.layer);
        for r in &self.shares {
            let _ = match r.start {
                Some(start) => writeln!(
                    out,
                    "target {} weight {} slots {}-{}",
                    r.target,
                    r.weight,
                    start,
                    (start + r.count) as i32 - 1
                ),
                None => writeln!(
                    out,
                    "target {} weight {} interleaved {}",
                    r.target, r.weight, r.count
                ),
            };
        }
        out
    }

    /// Parses canonical text. The weights are re-apportioned and the result
    /// must reproduce the text exactly.
    pub fn from_canonical(text: &str) -> Result<Self, SlotError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, reason: &str| SlotError::Parse {
            line: line + 1,
            reason: reason.to_owned(),
        };
        let (ln, head) = lines.next().ok_or_else(|| perr(0, "empty table"))?;
        let words: Vec<&str> = head.split_whitespace().collect();
        let layer = match words.as_slice() {
            ["layer", "inter"] => Layer::Inter,
            ["layer", "intra", org] => Layer::Intra((*org).to_owned()),
            _ => return Err(perr(ln, "expected `layer inter` or `layer intra <org>`")),
        };
        let mut normalized = format!("layer {layer}\n");
        let mut weights = BTreeMap::new();
        for (ln, line) in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            let ["target", target, "weight", weight, _, _] = words.as_slice() else {
                return Err(perr(ln, "expected `target <id> weight <w> <slots>`"));
            };
            let weight: u64 = weight.parse().map_err(|_| perr(ln, "bad weight"))?;
            weights.insert((*target).to_owned(), weight);
            normalized.push_str(&words.join(" "));
            normalized.push('\n');
        }
        let table = SlotTable::allocate(layer, &weights)?;
        if table.to_canonical() != normalized {
            return Err(SlotError::NotCanonical(table.layer.to_string()));
        }
        Ok(table)
    }
}

/// Spreads `counts[i]` slots of each target evenly over the slot space: each
/// slot goes to the target furthest behind its proportional pace, ties to the
/// earlier target. Every window of consecutive slots then holds each target in
/// close to its overall share.
fn interleaved_owners(counts: &[u16]) -> Vec<u16> {
    let total = SLOT_COUNT as i64;
    let mut given = vec![0i64; counts.len()];
    let mut owner = Vec::with_capacity(SLOT_COUNT);
    for s in 1..=total {
        let i = (0..counts.len())
            .max_by_key(|&i| {
                (
                    counts[i] as i64 * s - given[i] * total,
                    std::cmp::Reverse(i),
                )
            })
            .expect("at least one target");
        given[i] += 1;
        owner.push(i as u16);
    }
    owner
}

/// The inter-organization table plus one intra table per organization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotTables {
    pub inter: SlotTable,
    pub intra: BTreeMap<String, SlotTable>,
}

/// Designation of a chunk by the slot tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Designation {
    pub org: String,
    pub node: String,
}

impl SlotTables {
    /// `org_bandwidth`: master bandwidth per organization; `node_capacity`:
    /// organization -> node -> capacity.
    pub fn build(
        org_bandwidth: &BTreeMap<String, u64>,
        node_capacity: &BTreeMap<String, BTreeMap<String, u64>>,
    ) -> Result<Self, SlotError> {
        let inter = SlotTable::allocate(Layer::Inter, org_bandwidth)?;
        let intra = node_capacity
            .iter()
            .map(|(org, caps)| {
                SlotTable::allocate(Layer::Intra(org.clone()), caps).map(|t| (org.clone(), t))
            })
            .collect::<Result<_, _>>()?;
        Ok(SlotTables { inter, intra })
    }

    pub fn org_for(&self, hash: &Digest) -> &str {
        self.inter.lookup(hash)
    }

    /// Node within `org` for `hash`. Panics if `org` has no intra table.
    pub fn node_in(&self, org: &str, hash: &Digest) -> &str {
        self.intra[org].lookup(hash)
    }

    pub fn designate(&self, hash: &Digest) -> Designation {
        let org = self.org_for(hash);
        Designation {
            org: org.to_owned(),
            node: self.node_in(org, hash).to_owned(),
        }
    }

    pub fn to_canonical(&self) -> String {
        let mut out = self.inter.to_canonical();
        for table in self.intra.values() {
            out.push('\n');
            out.push_str(&table.to_canonical());
        }
        out
    }

    pub fn from_canonical(text: &str) -> Result<Self, SlotError> {
        let mut sections = text.split("\n\n").filter(|s| !s.trim().is_empty());
        let inter = SlotTable::from_canonical(sections.next().unwrap_or(""))?;
        if inter.layer != Layer::Inter {
            return Err(SlotError::Parse {
                line: 1,
                reason: "first section must be the inter table".into(),
            });
        }
        let mut intra = BTreeMap::new();
        for section in sections {
            let table = SlotTable::from_canonical(section)?;
            let Layer::Intra(org) = table.layer.clone() else {
                return Err(SlotError::Parse {
                    line: 1,
                    reason: "duplicate inter table".into(),
                });
            };
            intra.insert(org, table);
        }
        Ok(SlotTables { inter, intra })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn weights(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn counts(table: &SlotTable) -> Vec<u16> {
        table.shares().iter().map(|r| r.count).collect()
    }

    #[test]
    fn crc16_check_value() {
        assert_eq!(CRC16.checksum(b"123456789"), 0x31C3);
        assert_eq!(key_slot(b"123456789"), 12739);
    }

    #[test]
    fn stepped_bandwidth_apportionment() {
        let t = SlotTable::allocate(
            Layer::Inter,
            &weights(&[("org1", 400), ("org2", 800), ("org3", 1200), ("org4", 1600)]),
        )
        .unwrap();
        assert_eq!(counts(&t), vec![1638, 3277, 4915, 6554]);
        assert_eq!(t.shares()[3].start, Some(9830));
        assert_eq!(t.target_of_slot(12739), "org4");
    }

    #[test]
    fn single_and_equal_targets() {
        let one = SlotTable::allocate(Layer::Inter, &weights(&[("a", 5)])).unwrap();
        assert_eq!(counts(&one), vec![16384]);
        let four = SlotTable::allocate(
            Layer::Inter,
            &weights(&[("a", 1000), ("b", 1000), ("c", 1000), ("d", 1000)]),
        )
        .unwrap();
        assert_eq!(counts(&four), vec![4096; 4]);
    }

    #[test]
    fn capacity_apportionment() {
        let layer = || Layer::Intra("o".into());
        let two = SlotTable::allocate(layer(), &weights(&[("p1", 10), ("p2", 10)])).unwrap();
        assert_eq!(counts(&two), vec![8192, 8192]);
        let quarters = SlotTable::allocate(layer(), &weights(&[("p1", 1), ("p2", 3)])).unwrap();
        assert_eq!(counts(&quarters), vec![4096, 12288]);
        let thirds =
            SlotTable::allocate(layer(), &weights(&[("p1", 1), ("p2", 1), ("p3", 1)])).unwrap();
        assert_eq!(counts(&thirds), vec![5462, 5461, 5461]);
    }

    #[test]
    fn rejects_bad_weights_and_hashes() {
        assert_eq!(
            SlotTable::allocate(Layer::Inter, &weights(&[("a", 0)])),
            Err(SlotError::ZeroWeight("a".into()))
        );
        assert_eq!(
            SlotTable::allocate(Layer::Inter, &BTreeMap::new()),
            Err(SlotError::NoTargets)
        );
        assert!(slot_of("not-a-hash").is_err());
        let h = Digest::of(b"x").to_hex();
        assert_eq!(slot_of(&h).unwrap(), slot_of(&h).unwrap());
        assert_eq!(slot_of(&h).unwrap(), slot_of_digest(&Digest::of(b"x")));
    }

    #[test]
    fn canonical_text_roundtrip() {
        let tables = SlotTables::build(
            &weights(&[("org1", 400), ("org2", 800)]),
            &[
                ("org1".to_string(), weights(&[("p1", 1), ("p2", 1)])),
                ("org2".to_string(), weights(&[("p3", 2), ("p4", 1)])),
            ]
            .into_iter()
            .collect(),
        )
        .unwrap();
        let text = tables.to_canonical();
        assert!(text.starts_with("layer inter\ntarget org1 weight 400 slots 0-5460\n"));
        let back = SlotTables::from_canonical(&text).unwrap();
        assert_eq!(back, tables);
        assert_eq!(back.to_canonical(), text);
        let tampered = text.replace("slots 0-5460", "slots 0-5459");
        assert!(SlotTables::from_canonical(&tampered).is_err());
    }

    #[test]
    fn lookups_are_stable_across_rebuilds() {
        let w = weights(&[("org1", 400), ("org2", 800), ("org3", 1200)]);
        let a = SlotTable::allocate(Layer::Inter, &w).unwrap();
        let b = SlotTable::allocate(Layer::Inter, &w).unwrap();
        for i in 0..200u32 {
            let h = Digest::of(&i.to_le_bytes());
            assert_eq!(a.lookup(&h), b.lookup(&h));
        }
    }

    #[test]
    fn uniform_spread_matches_slot_share() {
        let t = SlotTable::allocate(
            Layer::Inter,
            &weights(&[("org1", 400), ("org2", 800), ("org3", 1200), ("org4", 1600)]),
        )
        .unwrap();
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let trials = 10_000u32;
        for i in 0..trials {
            *seen
                .entry(t.lookup(&Digest::of(&i.to_le_bytes())))
                .or_default() += 1;
        }
        for r in t.shares() {
            let observed = seen[r.target.as_str()] as f64 / trials as f64;
            let share = r.count as f64 / SLOT_COUNT as f64;
            assert!(
                (observed - share).abs() < 0.05,
                "{}: {observed} vs {share}",
                r.target
            );
        }
    }

    #[test]
    fn intra_layout_is_independent_of_inter_range() {
        let inter = SlotTable::allocate(
            Layer::Inter,
            &weights(&[("org1", 400), ("org2", 800), ("org3", 1200), ("org4", 1600)]),
        )
        .unwrap();
        let intra = SlotTable::allocate(
            Layer::Intra("org".into()),
            &weights(&[("p1", 1), ("p2", 2), ("p3", 5)]),
        )
        .unwrap();
        assert!(intra.shares().iter().all(|s| s.start.is_none()));
        for org in inter.shares() {
            let start = org.start.unwrap() as usize;
            let window = start..start + org.count as usize;
            for node in intra.shares() {
                let seen = window
                    .clone()
                    .filter(|&s| intra.target_of_slot(s as u16) == node.target)
                    .count() as f64;
                let expected = org.count as f64 * node.count as f64 / SLOT_COUNT as f64;
                assert!(
                    (seen - expected).abs() <= 2.0,
                    "{} in {}: {seen} vs {expected}",
                    node.target,
                    org.target
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn counts_sum_to_slot_count(ws in prop::collection::vec(1u64..1_000_000, 1..12)) {
            let total: u32 = apportion(&ws).iter().map(|&c| c as u32).sum();
            prop_assert_eq!(total, SLOT_COUNT as u32);
        }

        #[test]
        fn interleaving_keeps_apportioned_counts(ws in prop::collection::vec(1u64..1_000, 1..6)) {
            let w: BTreeMap<String, u64> =
                ws.iter().enumerate().map(|(i, w)| (format!("n{i}"), *w)).collect();
            let t = SlotTable::allocate(Layer::Intra("o".into()), &w).unwrap();
            let mut tally = vec![0u16; ws.len()];
            for s in 0..SLOT_COUNT {
                tally[t.owner[s] as usize] += 1;
            }
            prop_assert_eq!(tally, apportion(&ws));
        }

        #[test]
        fn counts_within_one_of_quota(ws in prop::collection::vec(1u64..10_000, 1..8)) {
            let sum: u64 = ws.iter().sum();
            for (w, c) in ws.iter().zip(apportion(&ws)) {
                let quota = SLOT_COUNT as f64 * *w as f64 / sum as f64;
                prop_assert!((c as f64 - quota).abs() < 1.0);
            }
        }

        #[test]
        fn raising_a_weight_never_loses_slots(
            ws in prop::collection::vec(1u64..10_000, 1..8),
            pick in 0usize..8,
            bump in 1u64..10_000,
        ) {
            let i = pick % ws.len();
            let before = apportion(&ws)[i];
            let mut raised = ws.clone();
            raised[i] += bump;
            prop_assert!(apportion(&raised)[i] >= before);
        }
    }
}
