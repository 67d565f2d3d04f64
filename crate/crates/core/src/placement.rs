//! Per-stripe chunk placement and the mirror strategy.
//!
//! Placement runs in two steps, mirroring who decides what in a deployment:
//!
//! 1. The client picks an organization for every chunk. A chunk keeps the
//!    organization its hash designates unless that organization is excluded,
//!    already holds `ceil(n/l)` chunks of the stripe, or the designated node
//!    is already taken by an earlier chunk. Chunks that must move go to the
//!    designated organization if it still has room, otherwise to the eligible
//!    organization with the most inter-layer slots.
//! 2. Each organization's master picks nodes for the chunks it received.
//!    Chunks whose hash designates a node of this organization claim that
//!    node first; a chunk whose node is already taken is diverted. A divert
//!    from node A to node B leaves a pending mirror (B -> A) at the master:
//!    the next conflicting chunk aimed at B goes to A, and the pair is done.
//!    Without a pending mirror the divert goes to the least loaded free node.
//!
//! Every chunk that does not end up on the node its hash designates gets a
//! [`LinkRecord`], stored at the designated organization's master.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erasure::CodeParams;
use crate::hash::{ChunkHash, Digest, DIGEST_HEX_LEN};
use crate::hashslot::SlotTables;

/// Bytes of a node public key.
pub const NODE_KEY_LEN: usize = 64;

/// Metered size of one link: a 64-byte hash plus a 64-byte node key.
pub const LINK_RECORD_BYTES: u64 = (DIGEST_HEX_LEN + NODE_KEY_LEN) as u64;

/// 64-byte public-key form of a node identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeKey([u8; NODE_KEY_LEN]);

impl NodeKey {
    pub fn for_node(node: &str) -> Self {
        let mut hasher = blake3::Hasher::new();
        hasher.update(b"dbnode node key\0");
        hasher.update(node.as_bytes());
        let mut key = [0u8; NODE_KEY_LEN];
        hasher.finalize_xof().fill(&mut key);
        NodeKey(key)
    }

    pub fn as_bytes(&self) -> &[u8; NODE_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeKey({})", hex::encode(&self.0[..6]))
    }
}

impl Serialize for NodeKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for NodeKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut key = [0u8; NODE_KEY_LEN];
        hex::decode_to_slice(&s, &mut key).map_err(serde::de::Error::custom)?;
        Ok(NodeKey(key))
    }
}

/// Redirection from a chunk hash to the node actually holding the chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub chunk_hash: ChunkHash,
    pub holder: String,
    pub holder_key: NodeKey,
    /// Logical sequence number.
    pub created_at: u64,
}

impl LinkRecord {
    pub fn new(chunk_hash: ChunkHash, holder: &str, created_at: u64) -> Self {
        LinkRecord {
            chunk_hash,
            holder: holder.to_owned(),
            holder_key: NodeKey::for_node(holder),
            created_at,
        }
    }

    pub fn size_bytes(&self) -> u64 {
        LINK_RECORD_BYTES
    }
}

/// Organization membership as the planner sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgLayout {
    pub master: String,
    /// Node identities, ascending.
    pub nodes: Vec<String>,
}

/// Pending mirrors kept by one organization's master.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorBook {
    /// node B -> nodes A such that the next conflict at B goes to A.
    pending: BTreeMap<String, VecDeque<String>>,
}

impl MirrorBook {
    pub fn pending_for(&self, node: &str) -> impl Iterator<Item = &str> {
        self.pending
            .get(node)
            .into_iter()
            .flatten()
            .map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.pending.values().all(VecDeque::is_empty)
    }

    fn take(&mut self, conflicted: &str, usable: impl Fn(&str) -> bool) -> Option<String> {
        let queue = self.pending.get_mut(conflicted)?;
        let pos = queue.iter().position(|a| usable(a))?;
        let target = queue.remove(pos);
        if queue.is_empty() {
            self.pending.remove(conflicted);
        }
        target
    }

    fn push(&mut self, diverted_to: &str, conflicted: &str) {
        self.pending
            .entry(diverted_to.to_owned())
            .or_default()
            .push_back(conflicted.to_owned());
    }
}

/// Read access to what nodes currently store.
pub trait StoreView {
    fn holds(&self, node: &str, hash: &ChunkHash) -> bool;
    fn link(&self, node: &str, hash: &ChunkHash) -> Option<&LinkRecord>;
    /// Number of chunks stored on `node`, used to pick divert targets.
    fn stored_chunks(&self, node: &str) -> usize;
}

/// A [`StoreView`] plus chunks that are planned but not yet stored.
pub struct Overlay<'a, S: StoreView + ?Sized> {
    base: &'a S,
    planned: BTreeMap<String, BTreeSet<ChunkHash>>,
}

impl<'a, S: StoreView + ?Sized> Overlay<'a, S> {
    pub fn new(base: &'a S) -> Self {
        Overlay {
            base,
            planned: BTreeMap::new(),
        }
    }

    pub fn add_plan(&mut self, plan: &PlacementPlan) {
        for e in &plan.entries {
            self.planned
                .entry(e.holder.clone())
                .or_default()
                .insert(e.chunk_hash);
        }
    }
}

impl<S: StoreView + ?Sized> StoreView for Overlay<'_, S> {
    fn holds(&self, node: &str, hash: &ChunkHash) -> bool {
        self.base.holds(node, hash) || self.planned.get(node).is_some_and(|s| s.contains(hash))
    }

    fn link(&self, node: &str, hash: &ChunkHash) -> Option<&LinkRecord> {
        self.base.link(node, hash)
    }

    fn stored_chunks(&self, node: &str) -> usize {
        self.base.stored_chunks(node) + self.planned.get(node).map_or(0, BTreeSet::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementEntry {
    pub index: usize,
    pub chunk_hash: ChunkHash,
    pub designated_org: String,
    pub designated: String,
    pub holder_org: String,
    pub holder: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedLink {
    pub record: LinkRecord,
    /// Node that stores the record.
    pub site: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementPlan {
    pub stripe_hash: Digest,
    /// One entry per chunk, in index order.
    pub entries: Vec<PlacementEntry>,
    pub links: Vec<PlannedLink>,
}

impl PlacementPlan {
    /// Chunk counts per holder organization.
    pub fn org_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.holder_org.as_str()).or_default() += 1;
        }
        counts
    }

    pub fn link_bytes(&self) -> u64 {
        self.links.len() as u64 * LINK_RECORD_BYTES
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlacementError {
    #[error("placement impossible: {available} organizations available, {required} required")]
    TooFewOrganizations { available: usize, required: usize },
    #[error("placement impossible: no organization can take chunk {index}")]
    NoRoom { index: usize },
    #[error("unknown organization {0:?}")]
    UnknownOrganization(String),
    #[error("chunk not found")]
    NotFound,
}

/// A chunk handed to an organization's master.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrgChunk {
    pub index: usize,
    pub chunk_hash: ChunkHash,
    /// True when the chunk's hash designates a node of this organization.
    pub designated_here: bool,
}

pub struct Planner<'a> {
    pub params: &'a CodeParams,
    pub tables: &'a SlotTables,
    pub orgs: &'a BTreeMap<String, OrgLayout>,
}

impl Planner<'_> {
    /// Plans one stripe. `mirrors` holds each organization's pending mirrors
    /// and is updated; `seq` numbers the link records created.
    pub fn plan_stripe(
        &self,
        stripe_hash: Digest,
        chunks: &[ChunkHash],
        exclusions: &BTreeSet<String>,
        mirrors: &mut BTreeMap<String, MirrorBook>,
        store: &dyn StoreView,
        seq: &mut u64,
    ) -> Result<PlacementPlan, PlacementError> {
        if let Some(unknown) = exclusions.iter().find(|o| !self.orgs.contains_key(*o)) {
            return Err(PlacementError::UnknownOrganization(unknown.clone()));
        }
        let available = self.orgs.len() - exclusions.len();
        if available < self.params.groups {
            return Err(PlacementError::TooFewOrganizations {
                available,
                required: self.params.groups,
            });
        }
        let cap = self.params.chunks_per_org();
        let designations: Vec<_> = chunks.iter().map(|h| self.tables.designate(h)).collect();

        // Client side: organization per chunk.
        let mut org_of: Vec<Option<String>> = vec![None; chunks.len()];
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        let mut claimed: BTreeSet<&str> = BTreeSet::new();
        for (i, d) in designations.iter().enumerate() {
            let n = count.get(d.org.as_str()).copied().unwrap_or(0);
            if !exclusions.contains(&d.org) && n < cap && !claimed.contains(d.node.as_str()) {
                claimed.insert(&d.node);
                *count.entry(&d.org).or_default() += 1;
                org_of[i] = Some(d.org.clone());
            }
        }
        for (i, d) in designations.iter().enumerate() {
            if org_of[i].is_some() {
                continue;
            }
            let room = |org: &str| {
                let n = count.get(org).copied().unwrap_or(0);
                !exclusions.contains(org) && n < cap.min(self.orgs[org].nodes.len())
            };
            let org = if room(&d.org) {
                d.org.clone()
            } else {
                self.orgs
                    .keys()
                    .filter(|o| room(o))
                    .max_by_key(|o| (self.tables.inter.slot_count(o), std::cmp::Reverse(*o)))
                    .cloned()
                    .ok_or(PlacementError::NoRoom { index: i })?
            };
            *count
                .entry(self.orgs.get_key_value(&org).unwrap().0)
                .or_default() += 1;
            org_of[i] = Some(org);
        }

        // Master side: node per chunk within each organization.
        let mut holder_of: Vec<String> = vec![String::new(); chunks.len()];
        let mut by_org: BTreeMap<String, Vec<OrgChunk>> = BTreeMap::new();
        for (i, org) in org_of.iter().enumerate() {
            let org = org.clone().expect("every chunk has an organization");
            by_org.entry(org.clone()).or_default().push(OrgChunk {
                index: i,
                chunk_hash: chunks[i],
                designated_here: designations[i].org == org,
            });
        }
        for (org, org_chunks) in &by_org {
            let book = mirrors.entry(org.clone()).or_default();
            for (index, holder) in self.assign_within_org(org, org_chunks, book, store)? {
                holder_of[index] = holder;
            }
        }

        let mut entries = Vec::with_capacity(chunks.len());
        let mut links: Vec<PlannedLink> = Vec::new();
        let in_plan = |node: &str, hash: &ChunkHash, upto: &[PlacementEntry]| {
            upto.iter()
                .any(|e| e.holder == node && e.chunk_hash == *hash)
        };
        for (i, d) in designations.into_iter().enumerate() {
            let holder = std::mem::take(&mut holder_of[i]);
            entries.push(PlacementEntry {
                index: i,
                chunk_hash: chunks[i],
                designated_org: d.org,
                designated: d.node,
                holder_org: org_of[i].take().unwrap(),
                holder,
            });
        }
        for e in &entries {
            if e.holder == e.designated {
                continue;
            }
            let holds = |node: &str| {
                store.holds(node, &e.chunk_hash) || in_plan(node, &e.chunk_hash, &entries)
            };
            let master = &self.orgs[&e.designated_org].master;
            let Some(site) = link_site(master, &e.designated, &e.holder, holds) else {
                continue;
            };
            if links
                .iter()
                .any(|l| l.site == site && l.record.chunk_hash == e.chunk_hash)
            {
                continue;
            }
            *seq += 1;
            links.push(PlannedLink {
                record: LinkRecord::new(e.chunk_hash, &e.holder, *seq),
                site,
            });
        }
        Ok(PlacementPlan {
            stripe_hash,
            entries,
            links,
        })
    }

    /// The master's half of placement: picks a node of `org` for each chunk.
    /// Chunks designated to this organization claim their nodes first.
    pub fn assign_within_org(
        &self,
        org: &str,
        chunks: &[OrgChunk],
        book: &mut MirrorBook,
        store: &dyn StoreView,
    ) -> Result<Vec<(usize, String)>, PlacementError> {
        let layout = self
            .orgs
            .get(org)
            .ok_or_else(|| PlacementError::UnknownOrganization(org.to_owned()))?;
        let table = &self.tables.intra[org];
        let mut order: Vec<&OrgChunk> = chunks.iter().collect();
        order.sort_by_key(|c| (!c.designated_here, c.index));

        let mut taken: BTreeMap<String, usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(chunks.len());
        for chunk in order {
            let target = table.lookup(&chunk.chunk_hash);
            let holder = if !taken.contains_key(target) {
                target.to_owned()
            } else if let Some(a) = book.take(target, |a| !taken.contains_key(a)) {
                a
            } else {
                let free = layout
                    .nodes
                    .iter()
                    .filter(|n| !taken.contains_key(*n))
                    .min_by_key(|n| (store.stored_chunks(n), (*n).clone()))
                    .ok_or(PlacementError::NoRoom { index: chunk.index })?
                    .clone();
                book.push(&free, target);
                free
            };
            taken.insert(holder.clone(), chunk.index);
            out.push((chunk.index, holder));
        }
        out.sort();
        Ok(out)
    }
}

/// Where the link for a diverted chunk is kept: the designated
/// organization's master, or the designated node when the master is the
/// holder. A node never keeps both a chunk and a link for the same hash, so
/// a site already holding the chunk gets no link.
pub fn link_site(
    master: &str,
    designated: &str,
    holder: &str,
    holds: impl Fn(&str) -> bool,
) -> Option<String> {
    if master != holder && !holds(master) {
        Some(master.to_owned())
    } else if designated != holder && !holds(designated) {
        Some(designated.to_owned())
    } else {
        None
    }
}

/// Node currently serving `hash`: the designated node if it holds the chunk,
/// otherwise the target of exactly one link found at the designated node or
/// its organization's master.
pub fn resolve(
    hash: &ChunkHash,
    tables: &SlotTables,
    orgs: &BTreeMap<String, OrgLayout>,
    store: &dyn StoreView,
) -> Result<String, PlacementError> {
    let d = tables.designate(hash);
    if store.holds(&d.node, hash) {
        return Ok(d.node);
    }
    if let Some(link) = store.link(&d.node, hash) {
        return Ok(link.holder.clone());
    }
    let master = &orgs[&d.org].master;
    if *master != d.node {
        if store.holds(master, hash) {
            return Ok(master.clone());
        }
        if let Some(link) = store.link(master, hash) {
            return Ok(link.holder.clone());
        }
    }
    Err(PlacementError::NotFound)
}
