//! The file channel: slot tables, master registry, file trees and access
//! policies, behind one serialized service.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erasure::stripe_hash;
use crate::hash::{ChunkHash, Digest};
use crate::hashslot::{SlotError, SlotTables};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("tables not initialized")]
    TablesNotInitialized,
    #[error("unknown organization {0:?}")]
    UnknownOrganization(String),
    #[error("node {node:?} does not belong to organization {org:?}")]
    NotAMember { node: String, org: String },
    #[error("file {0} already exists")]
    DuplicateFid(Digest),
    #[error("malformed file tree: {0}")]
    MalformedTree(String),
    #[error("file not found")]
    NotFound,
    #[error("permission denied: {0}")]
    PermissionDenied(Denial),
    #[error(transparent)]
    Slots(#[from] SlotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denial {
    NotPermitted,
    Banned,
}

impl std::fmt::Display for Denial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Denial::NotPermitted => "requester is not on the permission list",
            Denial::Banned => "requester is banned",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripeEntry {
    pub stripe_hash: Digest,
    pub chunk_hashes: Vec<ChunkHash>,
}

/// File hash, stripe hashes and chunk hashes of one stored file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileTree {
    pub file_hash: Digest,
    pub stripes: Vec<StripeEntry>,
    pub original_length: u64,
    pub owner: String,
}

impl FileTree {
    /// Builds a tree from per-stripe chunk hash lists.
    pub fn new(chunk_lists: Vec<Vec<ChunkHash>>, original_length: u64, owner: &str) -> Self {
        let stripes: Vec<StripeEntry> = chunk_lists
            .into_iter()
            .map(|chunk_hashes| StripeEntry {
                stripe_hash: stripe_hash(&chunk_hashes),
                chunk_hashes,
            })
            .collect();
        let file_hash = Self::compute_fid(stripes.iter().map(|s| &s.stripe_hash), original_length);
        FileTree {
            file_hash,
            stripes,
            original_length,
            owner: owner.to_owned(),
        }
    }

    /// Digest over the ordered stripe hashes followed by the original length.
    /// The owner is not part of it.
    pub fn compute_fid<'a>(
        stripe_hashes: impl IntoIterator<Item = &'a Digest>,
        original_length: u64,
    ) -> Digest {
        let len = original_length.to_be_bytes();
        let mut parts: Vec<&[u8]> = stripe_hashes
            .into_iter()
            .map(|h| &h.as_bytes()[..])
            .collect();
        parts.push(&len);
        Digest::of_parts(parts)
    }

    /// Checks that every stripe hash and the file hash match the contents,
    /// and that each stripe lists `n` chunks.
    pub fn verify(&self, n: usize) -> Result<(), LedgerError> {
        for (i, s) in self.stripes.iter().enumerate() {
            if s.chunk_hashes.len() != n {
                return Err(LedgerError::MalformedTree(format!(
                    "stripe {i} lists {} chunk hashes, expected {n}",
                    s.chunk_hashes.len()
                )));
            }
            if stripe_hash(&s.chunk_hashes) != s.stripe_hash {
                return Err(LedgerError::MalformedTree(format!(
                    "stripe {i} hash mismatch"
                )));
            }
        }
        let fid = Self::compute_fid(
            self.stripes.iter().map(|s| &s.stripe_hash),
            self.original_length,
        );
        if fid != self.file_hash {
            return Err(LedgerError::MalformedTree("file hash mismatch".into()));
        }
        Ok(())
    }

    pub fn chunk_hashes(&self) -> impl Iterator<Item = &ChunkHash> {
        self.stripes.iter().flat_map(|s| &s.chunk_hashes)
    }

    /// Canonical text form:
    ///
    /// ```text
    /// fid <hex>
    /// owner <id>
    /// length <bytes>
    /// stripes <J>
    /// stripe <i> <stripe hash>
    /// chunk <i> <j> <chunk hash>
    /// ```
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "fid {}", self.file_hash);
        let _ = writeln!(out, "owner {}", self.owner);
        let _ = writeln!(out, "length {}", self.original_length);
        let _ = writeln!(out, "stripes {}", self.stripes.len());
        for (i, s) in self.stripes.iter().enumerate() {
            let _ = writeln!(out, "stripe {i} {}", s.stripe_hash);
            for (j, c) in s.chunk_hashes.iter().enumerate() {
                let _ = writeln!(out, "chunk {i} {j} {c}");
            }
        }
        out
    }

    pub fn from_canonical(text: &str) -> Result<Self, LedgerError> {
        let bad = |what: &str| LedgerError::MalformedTree(what.to_owned());
        let mut fid = None;
        let mut owner = None;
        let mut length = None;
        let mut declared = None;
        let mut stripes: Vec<StripeEntry> = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["fid", h] => fid = Some(h.parse().map_err(|_| bad("fid"))?),
                ["owner", o] => owner = Some((*o).to_owned()),
                ["length", n] => length = Some(n.parse().map_err(|_| bad("length"))?),
                ["stripes", n] => declared = Some(n.parse::<usize>().map_err(|_| bad("stripes"))?),
                ["stripe", i, h] => {
                    if i.parse::<usize>().ok() != Some(stripes.len()) {
                        return Err(bad("stripe out of order"));
                    }
                    stripes.push(StripeEntry {
                        stripe_hash: h.parse().map_err(|_| bad("stripe hash"))?,
                        chunk_hashes: Vec::new(),
                    });
                }
                ["chunk", i, j, h] => {
                    let current = stripes.len().checked_sub(1);
                    let last = stripes
                        .last_mut()
                        .ok_or_else(|| bad("chunk before stripe"))?;
                    if i.parse::<usize>().ok() != current
                        || j.parse::<usize>().ok() != Some(last.chunk_hashes.len())
                    {
                        return Err(bad("chunk out of order"));
                    }
                    last.chunk_hashes
                        .push(h.parse().map_err(|_| bad("chunk hash"))?);
                }
                _ => return Err(bad(line)),
            }
        }
        if declared != Some(stripes.len()) {
            return Err(bad("stripe count"));
        }
        Ok(FileTree {
            file_hash: fid.ok_or_else(|| bad("missing fid"))?,
            stripes,
            original_length: length.ok_or_else(|| bad("missing length"))?,
            owner: owner.ok_or_else(|| bad("missing owner"))?,
        })
    }
}

/// Who may fetch a file tree, and how many times.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPolicy {
    /// Empty means anyone who is not banned.
    pub permission_list: BTreeSet<String>,
    pub banned_list: BTreeSet<String>,
    pub tokens: Option<u64>,
}

impl AccessPolicy {
    pub fn open() -> Self {
        Self::default()
    }

    pub fn with_tokens(mut self, tokens: u64) -> Self {
        self.tokens = Some(tokens);
        self
    }

    pub fn permit<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.permission_list.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn ban<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.banned_list.extend(ids.into_iter().map(Into::into));
        self
    }

    /// Identity check only; tokens are handled by the ledger.
    pub fn check(&self, requester: &str) -> Result<(), Denial> {
        if self.banned_list.contains(requester) {
            return Err(Denial::Banned);
        }
        if !self.permission_list.is_empty() && !self.permission_list.contains(requester) {
            return Err(Denial::NotPermitted);
        }
        Ok(())
    }

    /// Canonical text: `permit`, `ban` and `tokens` lines.
    pub fn to_canonical(&self) -> String {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        let tokens = self.tokens.map_or("none".to_owned(), |t| t.to_string());
        format!(
            "permit {}\nban {}\ntokens {tokens}\n",
            join(&self.permission_list),
            join(&self.banned_list)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FileRecord {
    tree: FileTree,
    policy: AccessPolicy,
}

/// Result of a granted file tree fetch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grant {
    pub tree: FileTree,
    /// Set when this grant used the last token. The file is gone from the
    /// ledger and these chunk hashes, no longer referenced by any live file,
    /// are to be deleted from the nodes once the read finishes.
    pub deletions: Option<Vec<ChunkHash>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    chunks_per_stripe: usize,
    /// Canonical text of every table version; the last is current.
    tables: Vec<String>,
    members: BTreeMap<String, BTreeSet<String>>,
    /// org -> node -> registered bandwidth.
    candidates: BTreeMap<String, BTreeMap<String, u64>>,
    files: BTreeMap<Digest, FileRecord>,
}

impl Ledger {
    /// `chunks_per_stripe` is the code's n; `members` lists each
    /// organization's nodes.
    pub fn new(chunks_per_stripe: usize, members: BTreeMap<String, BTreeSet<String>>) -> Self {
        Ledger {
            chunks_per_stripe,
            members,
            ..Default::default()
        }
    }

    /// Stores a new table version and returns its number, starting at 1.
    pub fn put_slot_tables(&mut self, tables: &SlotTables) -> u64 {
        self.tables.push(tables.to_canonical());
        self.tables.len() as u64
    }

    pub fn slot_tables_version(&self) -> u64 {
        self.tables.len() as u64
    }

    pub fn slot_tables_text(&self) -> Result<&str, LedgerError> {
        self.tables
            .last()
            .map(String::as_str)
            .ok_or(LedgerError::TablesNotInitialized)
    }

    pub fn get_slot_tables(&self) -> Result<SlotTables, LedgerError> {
        Ok(SlotTables::from_canonical(self.slot_tables_text()?)?)
    }

    /// Registers `node` as a master candidate of `org` and returns the
    /// organization's master: the highest-bandwidth candidate, ties to the
    /// lowest identity. Registering a node again replaces its bandwidth.
    pub fn register_master(
        &mut self,
        org: &str,
        node: &str,
        bandwidth: u64,
    ) -> Result<String, LedgerError> {
        let members = self
            .members
            .get(org)
            .ok_or_else(|| LedgerError::UnknownOrganization(org.to_owned()))?;
        if !members.contains(node) {
            return Err(LedgerError::NotAMember {
                node: node.to_owned(),
                org: org.to_owned(),
            });
        }
        self.candidates
            .entry(org.to_owned())
            .or_default()
            .insert(node.to_owned(), bandwidth);
        Ok(self.master_of(org).expect("just registered").to_owned())
    }

    pub fn master_of(&self, org: &str) -> Option<&str> {
        self.candidates
            .get(org)?
            .iter()
            .max_by_key(|(node, bw)| (**bw, std::cmp::Reverse(*node)))
            .map(|(node, _)| node.as_str())
    }

    pub fn contains(&self, fid: &Digest) -> bool {
        self.files.contains_key(fid)
    }

    pub fn put_file_tree(
        &mut self,
        tree: FileTree,
        policy: AccessPolicy,
    ) -> Result<Digest, LedgerError> {
        tree.verify(self.chunks_per_stripe)?;
        let fid = tree.file_hash;
        if self.files.contains_key(&fid) {
            return Err(LedgerError::DuplicateFid(fid));
        }
        self.files.insert(fid, FileRecord { tree, policy });
        Ok(fid)
    }

    /// Access-checked tree fetch. A grant on a token-limited policy uses one
    /// token unless the requester is the owner; using the last one retires
    /// the file.
    pub fn get_file_tree(&mut self, fid: &Digest, requester: &str) -> Result<Grant, LedgerError> {
        let record = self.files.get_mut(fid).ok_or(LedgerError::NotFound)?;
        if record.tree.owner == requester {
            return Ok(Grant {
                tree: record.tree.clone(),
                deletions: None,
            });
        }
        record
            .policy
            .check(requester)
            .map_err(LedgerError::PermissionDenied)?;
        let Some(tokens) = record.policy.tokens.as_mut() else {
            return Ok(Grant {
                tree: record.tree.clone(),
                deletions: None,
            });
        };
        if *tokens == 0 {
            return Err(LedgerError::NotFound);
        }
        *tokens -= 1;
        if *tokens > 0 {
            return Ok(Grant {
                tree: record.tree.clone(),
                deletions: None,
            });
        }
        let record = self.files.remove(fid).expect("present");
        let still_used: BTreeSet<&ChunkHash> = self
            .files
            .values()
            .flat_map(|r| r.tree.chunk_hashes())
            .collect();
        let deletions: BTreeSet<ChunkHash> = record
            .tree
            .chunk_hashes()
            .filter(|h| !still_used.contains(h))
            .copied()
            .collect();
        Ok(Grant {
            tree: record.tree,
            deletions: Some(deletions.into_iter().collect()),
        })
    }

    pub fn policy(&self, fid: &Digest) -> Option<&AccessPolicy> {
        self.files.get(fid).map(|r| &r.policy)
    }

    pub fn file_ids(&self) -> impl Iterator<Item = &Digest> {
        self.files.keys()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn members() -> BTreeMap<String, BTreeSet<String>> {
        [("org1", vec!["a1", "a2"]), ("org2", vec!["b1", "b2"])]
            .into_iter()
            .map(|(o, ns)| (o.to_string(), ns.into_iter().map(String::from).collect()))
            .collect()
    }

    fn tree(seed: u8, stripes: usize, n: usize, owner: &str) -> FileTree {
        let lists = (0..stripes)
            .map(|s| {
                (0..n)
                    .map(|c| Digest::of(&[seed, s as u8, c as u8]))
                    .collect()
            })
            .collect();
        FileTree::new(lists, (stripes * 3) as u64, owner)
    }

    fn tables() -> SlotTables {
        let bw = [("org1".to_string(), 1000), ("org2".to_string(), 500)].into();
        let caps = [
            (
                "org1".to_string(),
                [("a1".to_string(), 1), ("a2".to_string(), 1)].into(),
            ),
            (
                "org2".to_string(),
                [("b1".to_string(), 1), ("b2".to_string(), 1)].into(),
            ),
        ]
        .into();
        SlotTables::build(&bw, &caps).unwrap()
    }

    #[test]
    fn slot_table_versions() {
        let mut l = Ledger::new(6, members());
        assert_eq!(l.get_slot_tables(), Err(LedgerError::TablesNotInitialized));
        let t = tables();
        assert_eq!(l.put_slot_tables(&t), 1);
        assert_eq!(l.get_slot_tables().unwrap(), t);
        assert_eq!(l.slot_tables_text().unwrap(), t.to_canonical());
        assert_eq!(l.put_slot_tables(&t), 2);
    }

    #[test]
    fn master_is_fastest_then_lowest_id() {
        let mut l = Ledger::new(6, members());
        assert_eq!(l.register_master("org1", "a2", 800).unwrap(), "a2");
        assert_eq!(l.register_master("org1", "a1", 1000).unwrap(), "a1");
        assert_eq!(l.register_master("org2", "b2", 500).unwrap(), "b2");
        assert_eq!(l.register_master("org2", "b1", 500).unwrap(), "b1");
        assert_eq!(l.register_master("org1", "a1", 100).unwrap(), "a2");
        assert!(matches!(
            l.register_master("org1", "b1", 100),
            Err(LedgerError::NotAMember { .. })
        ));
        assert!(matches!(
            l.register_master("org9", "a1", 100),
            Err(LedgerError::UnknownOrganization(_))
        ));
    }

    #[test]
    fn file_tree_lifecycle() {
        let mut l = Ledger::new(6, members());
        let t = tree(1, 2, 6, "alice");
        let fid = l.put_file_tree(t.clone(), AccessPolicy::open()).unwrap();
        assert_eq!(
            fid,
            FileTree::compute_fid(t.stripes.iter().map(|s| &s.stripe_hash), 6)
        );
        assert_eq!(
            l.put_file_tree(t.clone(), AccessPolicy::open()),
            Err(LedgerError::DuplicateFid(fid))
        );
        assert_eq!(l.get_file_tree(&fid, "bob").unwrap().tree, t);
        assert_eq!(
            l.get_file_tree(&Digest::of(b"?"), "bob"),
            Err(LedgerError::NotFound)
        );
    }

    #[test]
    fn short_stripe_is_rejected() {
        let mut l = Ledger::new(6, members());
        let err = l
            .put_file_tree(tree(1, 1, 5, "alice"), AccessPolicy::open())
            .unwrap_err();
        assert!(matches!(err, LedgerError::MalformedTree(_)));
    }

    #[test]
    fn tampering_changes_the_fid() {
        let t = tree(1, 3, 6, "alice");
        let mut tampered = t.clone();
        tampered.stripes[1].chunk_hashes[4] = Digest::of(b"evil");
        assert!(tampered.verify(6).is_err());
        let rebuilt = FileTree::new(
            tampered
                .stripes
                .iter()
                .map(|s| s.chunk_hashes.clone())
                .collect(),
            t.original_length,
            "alice",
        );
        assert_ne!(rebuilt.file_hash, t.file_hash);
        let mut longer = t.clone();
        longer.original_length += 1;
        assert!(longer.verify(6).is_err());
    }

    #[test]
    fn canonical_tree_roundtrip() {
        let t = tree(7, 2, 6, "alice");
        let text = t.to_canonical();
        assert_eq!(FileTree::from_canonical(&text).unwrap(), t);
        let empty = FileTree::new(Vec::new(), 0, "bob");
        assert_eq!(
            FileTree::from_canonical(&empty.to_canonical()).unwrap(),
            empty
        );
        assert!(FileTree::from_canonical(&text.replace("stripes 2", "stripes 3")).is_err());
        assert_eq!(
            AccessPolicy::open()
                .permit(["b", "a"])
                .with_tokens(2)
                .to_canonical(),
            "permit a,b\nban \ntokens 2\n"
        );
    }

    #[test]
    fn access_rules() {
        let mut l = Ledger::new(6, members());
        let fid = l
            .put_file_tree(
                tree(2, 1, 6, "alice"),
                AccessPolicy::open().permit(["bob", "carol"]).ban(["carol"]),
            )
            .unwrap();
        assert!(l.get_file_tree(&fid, "bob").is_ok());
        assert_eq!(
            l.get_file_tree(&fid, "carol"),
            Err(LedgerError::PermissionDenied(Denial::Banned))
        );
        assert_eq!(
            l.get_file_tree(&fid, "dave"),
            Err(LedgerError::PermissionDenied(Denial::NotPermitted))
        );
        assert!(l.get_file_tree(&fid, "alice").is_ok());
    }

    #[test]
    fn tokens_run_out() {
        let mut l = Ledger::new(6, members());
        let shared = tree(3, 1, 6, "alice");
        let t = tree(4, 2, 6, "alice");
        let mut with_shared_chunk = t
            .stripes
            .iter()
            .map(|s| s.chunk_hashes.clone())
            .collect::<Vec<_>>();
        with_shared_chunk[0][0] = shared.stripes[0].chunk_hashes[0];
        let t = FileTree::new(with_shared_chunk, 6, "alice");
        l.put_file_tree(shared.clone(), AccessPolicy::open())
            .unwrap();
        let fid = l
            .put_file_tree(t.clone(), AccessPolicy::open().with_tokens(2))
            .unwrap();

        assert_eq!(l.get_file_tree(&fid, "alice").unwrap().deletions, None);
        assert_eq!(
            l.policy(&fid).unwrap().tokens,
            Some(2),
            "owner reads are free"
        );
        assert_eq!(l.get_file_tree(&fid, "bob").unwrap().deletions, None);
        let last = l.get_file_tree(&fid, "bob").unwrap();
        let deletions = last.deletions.unwrap();
        assert_eq!(
            deletions.len(),
            11,
            "the chunk shared with another file stays"
        );
        assert!(!deletions.contains(&shared.stripes[0].chunk_hashes[0]));
        assert_eq!(l.get_file_tree(&fid, "bob"), Err(LedgerError::NotFound));
        assert_eq!(l.get_file_tree(&fid, "alice"), Err(LedgerError::NotFound));
        assert!(l.contains(&shared.file_hash));
    }
}
