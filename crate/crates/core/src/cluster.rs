//! A whole deployment: nodes, ledger, slot tables and mirror books, with
//! failure injection and optional on-disk state.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ClusterConfig, ConfigError};
use crate::erasure::{CodeParams, ErasureError, ReedSolomon};
use crate::hash::{ChunkHash, Digest};
use crate::hashslot::{SlotError, SlotTables};
use crate::ledger::{Ledger, LedgerError};
use crate::node::{NodeError, NodeInfo, NodeState, Role};
use crate::placement::{
    link_site, resolve, LinkRecord, MirrorBook, OrgChunk, OrgLayout, PlacementError, Planner,
    StoreView,
};
use crate::simnet::SimError;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Erasure(#[from] ErasureError),
    #[error(transparent)]
    Slots(#[from] SlotError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unknown node or organization {0:?}")]
    Unknown(String),
    #[error("node {0} is down")]
    NodeDown(String),
    #[error("stripe {stripe} unrecoverable: {reachable} chunks reachable, {needed} needed")]
    Unrecoverable {
        stripe: usize,
        reachable: usize,
        needed: usize,
    },
    #[error("stripe {0} failed its integrity check")]
    Integrity(usize),
    #[error("state directory: {0}")]
    Io(#[from] io::Error),
    #[error("state file: {0}")]
    State(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedState {
    config: ClusterConfig,
    ledger: Ledger,
    mirrors: BTreeMap<String, MirrorBook>,
    link_seq: u64,
    dead: BTreeSet<String>,
}

const STATE_FILE: &str = "cluster.json";

pub struct Cluster {
    pub(crate) config: ClusterConfig,
    pub(crate) params: CodeParams,
    pub(crate) codec: ReedSolomon,
    pub(crate) tables: SlotTables,
    pub(crate) orgs: BTreeMap<String, OrgLayout>,
    pub(crate) nodes: BTreeMap<String, NodeState>,
    pub(crate) ledger: Ledger,
    pub(crate) mirrors: BTreeMap<String, MirrorBook>,
    pub(crate) link_seq: u64,
    pub(crate) dead: BTreeSet<String>,
    state_dir: Option<PathBuf>,
}

impl StoreView for BTreeMap<String, NodeState> {
    fn holds(&self, node: &str, hash: &ChunkHash) -> bool {
        self.get(node).is_some_and(|n| n.holds(hash))
    }

    fn link(&self, node: &str, hash: &ChunkHash) -> Option<&LinkRecord> {
        self.get(node).and_then(|n| n.link(hash))
    }

    fn stored_chunks(&self, node: &str) -> usize {
        self.get(node).map_or(0, NodeState::chunk_count)
    }
}

impl Cluster {
    /// Builds an in-memory cluster: registers masters, allocates slot tables
    /// and publishes them on the ledger.
    pub fn new(config: ClusterConfig) -> Result<Self, ClusterError> {
        Self::build(config, None)
    }

    /// Like [`Cluster::new`], with state kept under `dir`.
    pub fn create(config: ClusterConfig, dir: &Path) -> Result<Self, ClusterError> {
        if dir.join(STATE_FILE).exists() {
            return Err(io::Error::new(
                io::ErrorKind::AlreadyExists,
                format!("{} already holds a cluster", dir.display()),
            )
            .into());
        }
        let cluster = Self::build(config, Some(dir))?;
        cluster.save()?;
        Ok(cluster)
    }

    /// Reopens a cluster created with [`Cluster::create`].
    pub fn open(dir: &Path) -> Result<Self, ClusterError> {
        let saved: SavedState = serde_json::from_slice(&fs::read(dir.join(STATE_FILE))?)?;
        saved.config.validate()?;
        let mut cluster = Self::build(saved.config, Some(dir))?;
        cluster.ledger = saved.ledger;
        cluster.mirrors = saved.mirrors;
        cluster.link_seq = saved.link_seq;
        cluster.dead = saved.dead;
        Ok(cluster)
    }

    /// Writes ledger, mirror books and liveness to the state directory, if
    /// any. Chunks and links are written as they change.
    pub fn save(&self) -> Result<(), ClusterError> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let saved = SavedState {
            config: self.config.clone(),
            ledger: self.ledger.clone(),
            mirrors: self.mirrors.clone(),
            link_seq: self.link_seq,
            dead: self.dead.clone(),
        };
        let tmp = dir.join(format!("{STATE_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&saved)?)?;
        fs::rename(tmp, dir.join(STATE_FILE))?;
        Ok(())
    }

    fn build(config: ClusterConfig, dir: Option<&Path>) -> Result<Self, ClusterError> {
        config.validate()?;
        let params = config.params();
        let codec = ReedSolomon::new(params.total_chunks, params.data_chunks)?;
        let mut ledger = Ledger::new(params.total_chunks, config.members());
        let mut orgs = BTreeMap::new();
        let mut org_bandwidth = BTreeMap::new();
        let mut capacities = BTreeMap::new();
        for org in &config.orgs {
            let mut master = String::new();
            for node in &org.nodes {
                master = ledger.register_master(&org.id, &node.id, node.bandwidth_mbps)?;
            }
            let master_bw = config.node(&master).expect("registered").bandwidth_mbps;
            org_bandwidth.insert(org.id.clone(), master_bw);
            capacities.insert(
                org.id.clone(),
                org.nodes
                    .iter()
                    .map(|n| (n.id.clone(), n.capacity))
                    .collect(),
            );
            let mut nodes: Vec<String> = org.nodes.iter().map(|n| n.id.clone()).collect();
            nodes.sort();
            orgs.insert(org.id.clone(), OrgLayout { master, nodes });
        }
        let tables = SlotTables::build(&org_bandwidth, &capacities)?;
        ledger.put_slot_tables(&tables);

        let mut nodes = BTreeMap::new();
        for org in &config.orgs {
            for n in &org.nodes {
                let info = NodeInfo {
                    id: n.id.clone(),
                    org: org.id.clone(),
                    role: if orgs[&org.id].master == n.id {
                        Role::Master
                    } else {
                        Role::Common
                    },
                    capacity: n.capacity,
                    bandwidth_mbps: n.bandwidth_mbps,
                };
                let state = match dir {
                    Some(d) => NodeState::with_dir(info, &d.join("nodes").join(&n.id))?,
                    None => NodeState::new(info),
                };
                nodes.insert(n.id.clone(), state);
            }
        }
        Ok(Cluster {
            config,
            params,
            codec,
            tables,
            orgs,
            nodes,
            ledger,
            mirrors: BTreeMap::new(),
            link_seq: 0,
            dead: BTreeSet::new(),
            state_dir: dir.map(Path::to_owned),
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn tables(&self) -> &SlotTables {
        &self.tables
    }

    pub fn orgs(&self) -> &BTreeMap<String, OrgLayout> {
        &self.orgs
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn mirrors(&self) -> &BTreeMap<String, MirrorBook> {
        &self.mirrors
    }

    pub fn node(&self, id: &str) -> Option<&NodeState> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeState> {
        self.nodes.values()
    }

    pub fn master_of(&self, org: &str) -> Option<&str> {
        self.orgs.get(org).map(|o| o.master.as_str())
    }

    pub fn is_alive(&self, node: &str) -> bool {
        self.nodes.contains_key(node) && !self.dead.contains(node)
    }

    pub fn dead_nodes(&self) -> &BTreeSet<String> {
        &self.dead
    }

    pub fn planner(&self) -> Planner<'_> {
        Planner {
            params: &self.params,
            tables: &self.tables,
            orgs: &self.orgs,
        }
    }

    pub fn kill_node(&mut self, node: &str) -> Result<(), ClusterError> {
        if !self.nodes.contains_key(node) {
            return Err(ClusterError::Unknown(node.to_owned()));
        }
        self.dead.insert(node.to_owned());
        Ok(())
    }

    pub fn kill_org(&mut self, org: &str) -> Result<(), ClusterError> {
        let layout = self
            .orgs
            .get(org)
            .ok_or_else(|| ClusterError::Unknown(org.to_owned()))?;
        self.dead.extend(layout.nodes.iter().cloned());
        Ok(())
    }

    /// Revives a node, or every node of an organization. Stored data is kept.
    pub fn revive(&mut self, id: &str) -> Result<(), ClusterError> {
        if let Some(layout) = self.orgs.get(id) {
            for n in &layout.nodes {
                self.dead.remove(n);
            }
        } else if self.nodes.contains_key(id) {
            self.dead.remove(id);
        } else {
            return Err(ClusterError::Unknown(id.to_owned()));
        }
        Ok(())
    }

    pub fn revive_all(&mut self) {
        self.dead.clear();
    }

    /// Node serving `hash` according to slot tables and links, regardless of
    /// liveness.
    pub fn resolve(&self, hash: &ChunkHash) -> Result<String, PlacementError> {
        resolve(hash, &self.tables, &self.orgs, &self.nodes)
    }

    /// Live nodes holding `hash`, fastest first, ties by identity.
    pub fn live_holders(&self, hash: &ChunkHash) -> Vec<&str> {
        let mut holders: Vec<&NodeState> = self
            .nodes
            .values()
            .filter(|n| n.holds(hash) && !self.dead.contains(n.id()))
            .collect();
        holders.sort_by_key(|n| (std::cmp::Reverse(n.info.bandwidth_mbps), n.id().to_owned()));
        holders.into_iter().map(NodeState::id).collect()
    }

    /// The master's share of a write: places the chunks an organization
    /// received onto its nodes (hash-designated nodes first, conflicts via
    /// the mirror rule) and records links for those not on their designated
    /// node. Returns (chunk index, holder) pairs. A store failure aborts and
    /// removes what this call stored.
    pub fn master_distribute(
        &mut self,
        org: &str,
        chunks: Vec<(OrgChunk, Bytes)>,
    ) -> Result<Vec<(usize, String)>, ClusterError> {
        let org_chunks: Vec<OrgChunk> = chunks.iter().map(|(c, _)| c.clone()).collect();
        let mut book = self.mirrors.get(org).cloned().unwrap_or_default();
        let placed = self
            .planner()
            .assign_within_org(org, &org_chunks, &mut book, &self.nodes)?;
        let data: BTreeMap<usize, (ChunkHash, Bytes)> = chunks
            .into_iter()
            .map(|(c, d)| (c.index, (c.chunk_hash, d)))
            .collect();
        let mut undo = Undo::default();
        let result = (|| {
            for (index, holder) in &placed {
                let (hash, bytes) = &data[index];
                self.store_chunk_at(holder, *hash, bytes.clone(), &mut undo)?;
            }
            for (index, holder) in &placed {
                let (hash, _) = &data[index];
                let d = self.tables.designate(hash);
                if d.node == *holder {
                    continue;
                }
                let master = self.orgs[&d.org].master.clone();
                if let Some(site) =
                    link_site(&master, &d.node, holder, |n| self.nodes.holds(n, hash))
                {
                    self.link_seq += 1;
                    let record = LinkRecord::new(*hash, holder, self.link_seq);
                    self.store_link_at(&site, record, &mut undo)?;
                }
            }
            Ok(())
        })();
        match result {
            Ok(()) => {
                self.mirrors.insert(org.to_owned(), book);
                Ok(placed)
            }
            Err(e) => {
                self.rollback(undo);
                Err(e)
            }
        }
    }

    pub(crate) fn store_chunk_at(
        &mut self,
        node: &str,
        hash: ChunkHash,
        data: Bytes,
        undo: &mut Undo,
    ) -> Result<(), ClusterError> {
        if self.dead.contains(node) {
            return Err(ClusterError::NodeDown(node.to_owned()));
        }
        let state = self
            .nodes
            .get_mut(node)
            .ok_or_else(|| ClusterError::Unknown(node.to_owned()))?;
        let had_chunk = state.holds(&hash);
        let had_link = state.link(&hash).cloned();
        state.store_chunk(hash, data)?;
        if !had_chunk {
            undo.chunks.push((node.to_owned(), hash, had_link));
        }
        Ok(())
    }

    pub(crate) fn store_link_at(
        &mut self,
        node: &str,
        record: LinkRecord,
        undo: &mut Undo,
    ) -> Result<(), ClusterError> {
        if self.dead.contains(node) {
            return Err(ClusterError::NodeDown(node.to_owned()));
        }
        let state = self
            .nodes
            .get_mut(node)
            .ok_or_else(|| ClusterError::Unknown(node.to_owned()))?;
        let previous = state.link(&record.chunk_hash).cloned();
        let hash = record.chunk_hash;
        if state.store_link(record)? {
            undo.links.push((node.to_owned(), hash, previous));
        }
        Ok(())
    }

    /// Reverts stores recorded in `undo`, newest first.
    pub(crate) fn rollback(&mut self, undo: Undo) {
        for (node, hash, previous) in undo.links.into_iter().rev() {
            let state = self.nodes.get_mut(&node).expect("known node");
            let _ = state.delete_chunk(&hash);
            if let Some(p) = previous {
                let _ = state.store_link(p);
            }
        }
        for (node, hash, had_link) in undo.chunks.into_iter().rev() {
            let state = self.nodes.get_mut(&node).expect("known node");
            let _ = state.delete_chunk(&hash);
            if let Some(l) = had_link {
                let _ = state.store_link(l);
            }
        }
    }

    /// Deletes chunks and links for `hashes` on every node, dead or alive.
    pub fn delete_everywhere(&mut self, hashes: &[ChunkHash]) -> Result<(), ClusterError> {
        for node in self.nodes.values_mut() {
            for h in hashes {
                node.delete_chunk(h)?;
            }
        }
        Ok(())
    }

    pub fn total_links(&self) -> usize {
        self.nodes.values().map(NodeState::link_count).sum()
    }

    pub fn max_links_per_node(&self) -> usize {
        self.nodes
            .values()
            .map(NodeState::link_count)
            .max()
            .unwrap_or(0)
    }

    pub fn total_chunks(&self) -> usize {
        self.nodes.values().map(NodeState::chunk_count).sum()
    }

    /// Wipes all chunks, links, files and mirror books, keeping topology and
    /// slot tables.
    pub fn reset_storage(&mut self) -> Result<(), ClusterError> {
        for node in self.nodes.values_mut() {
            node.clear()?;
        }
        self.ledger = {
            let mut l = Ledger::new(self.params.total_chunks, self.config.members());
            for (org, layout) in &self.orgs {
                for n in &layout.nodes {
                    l.register_master(org, n, self.config.node(n).expect("known").bandwidth_mbps)?;
                }
            }
            l.put_slot_tables(&self.tables);
            l
        };
        self.mirrors.clear();
        self.link_seq = 0;
        Ok(())
    }

    pub fn file_exists(&self, fid: &Digest) -> bool {
        self.ledger.contains(fid)
    }
}

/// Stores made during one write, for all-or-nothing rollback.
#[derive(Debug, Default)]
pub(crate) struct Undo {
    /// (node, hash, link the node held for that hash before)
    chunks: Vec<(String, ChunkHash, Option<LinkRecord>)>,
    /// (node, hash, link it replaced)
    links: Vec<(String, ChunkHash, Option<LinkRecord>)>,
}
