//! A single DBNode: its chunk store, its link store, and the messages nodes
//! exchange.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{ChunkHash, Digest};
use crate::placement::LinkRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Master,
    Common,
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("node {node} is full: {used} of {capacity} bytes used, {needed} more requested")]
    CapacityExceeded {
        node: String,
        used: u64,
        capacity: u64,
        needed: u64,
    },
    #[error("chunk payload does not match hash {0}")]
    DigestMismatch(ChunkHash),
    #[error("node storage: {0}")]
    Io(#[from] io::Error),
}

/// Outcome of a fetch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fetch {
    Data(Bytes),
    /// The chunk lives on another node.
    Redirect(String),
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: String,
    pub org: String,
    pub role: Role,
    pub capacity: u64,
    pub bandwidth_mbps: u64,
}

/// Chunk and link stores of one node. A hash is never held both as a chunk
/// and as a link.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub info: NodeInfo,
    chunks: BTreeMap<ChunkHash, Bytes>,
    links: BTreeMap<ChunkHash, LinkRecord>,
    used: u64,
    dir: Option<PathBuf>,
}

const LINKS_FILE: &str = "links.json";

impl NodeState {
    pub fn new(info: NodeInfo) -> Self {
        NodeState {
            info,
            chunks: BTreeMap::new(),
            links: BTreeMap::new(),
            used: 0,
            dir: None,
        }
    }

    /// Backs the node with `dir`: one file per chunk, named by its hash, plus
    /// a link file. Anything already in `dir` is loaded.
    pub fn with_dir(info: NodeInfo, dir: &Path) -> Result<Self, NodeError> {
        fs::create_dir_all(dir)?;
        let mut node = NodeState::new(info);
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if name == LINKS_FILE {
                let links: Vec<LinkRecord> = serde_json::from_slice(&fs::read(&path)?)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                node.links = links.into_iter().map(|l| (l.chunk_hash, l)).collect();
            } else if let Ok(hash) = name.parse::<Digest>() {
                let data = Bytes::from(fs::read(&path)?);
                if Digest::of(&data) != hash {
                    return Err(NodeError::DigestMismatch(hash));
                }
                node.used += data.len() as u64;
                node.chunks.insert(hash, data);
            }
        }
        node.dir = Some(dir.to_owned());
        Ok(node)
    }

    pub fn id(&self) -> &str {
        &self.info.id
    }

    pub fn used_bytes(&self) -> u64 {
        self.used
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn holds(&self, hash: &ChunkHash) -> bool {
        self.chunks.contains_key(hash)
    }

    pub fn link(&self, hash: &ChunkHash) -> Option<&LinkRecord> {
        self.links.get(hash)
    }

    pub fn chunk(&self, hash: &ChunkHash) -> Option<&Bytes> {
        self.chunks.get(hash)
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkRecord> {
        self.links.values()
    }

    /// Stores a chunk. Storing a chunk already held is a no-op; a link for
    /// the same hash is dropped since the node now serves it directly.
    pub fn store_chunk(&mut self, hash: ChunkHash, data: Bytes) -> Result<(), NodeError> {
        if Digest::of(&data) != hash {
            return Err(NodeError::DigestMismatch(hash));
        }
        if self.chunks.contains_key(&hash) {
            return Ok(());
        }
        let needed = data.len() as u64;
        if self.used + needed > self.info.capacity {
            return Err(NodeError::CapacityExceeded {
                node: self.info.id.clone(),
                used: self.used,
                capacity: self.info.capacity,
                needed,
            });
        }
        if let Some(dir) = &self.dir {
            fs::write(dir.join(hash.to_hex()), &data)?;
        }
        self.used += needed;
        self.chunks.insert(hash, data);
        if self.links.remove(&hash).is_some() {
            self.persist_links()?;
        }
        Ok(())
    }

    /// Stores a link unless the chunk itself is held here. Returns whether
    /// the link was kept.
    pub fn store_link(&mut self, record: LinkRecord) -> Result<bool, NodeError> {
        if self.chunks.contains_key(&record.chunk_hash) {
            return Ok(false);
        }
        self.links.insert(record.chunk_hash, record);
        self.persist_links()?;
        Ok(true)
    }

    pub fn fetch_chunk(&self, hash: &ChunkHash) -> Fetch {
        if let Some(data) = self.chunks.get(hash) {
            Fetch::Data(data.clone())
        } else if let Some(link) = self.links.get(hash) {
            Fetch::Redirect(link.holder.clone())
        } else {
            Fetch::NotFound
        }
    }

    /// Removes the chunk and any link for `hash`. Idempotent.
    pub fn delete_chunk(&mut self, hash: &ChunkHash) -> Result<(), NodeError> {
        if let Some(data) = self.chunks.remove(hash) {
            self.used -= data.len() as u64;
            if let Some(dir) = &self.dir {
                match fs::remove_file(dir.join(hash.to_hex())) {
                    Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e.into()),
                    _ => {}
                }
            }
        }
        if self.links.remove(hash).is_some() {
            self.persist_links()?;
        }
        Ok(())
    }

    /// Drops everything, including the backing directory's contents.
    pub fn clear(&mut self) -> Result<(), NodeError> {
        let hashes: Vec<ChunkHash> = self
            .chunks
            .keys()
            .chain(self.links.keys())
            .copied()
            .collect();
        for h in hashes {
            self.delete_chunk(&h)?;
        }
        Ok(())
    }

    fn persist_links(&self) -> Result<(), NodeError> {
        if let Some(dir) = &self.dir {
            let links: Vec<&LinkRecord> = self.links.values().collect();
            let json =
                serde_json::to_vec(&links).map_err(io::Error::other)?;
            fs::write(dir.join(LINKS_FILE), json)?;
        }
        Ok(())
    }
}

/// Requests exchanged between clients and nodes.
///
/// | message       | fields                                   | metered bytes        |
/// |---------------|------------------------------------------|----------------------|
/// | `StoreChunk`  | chunk hash, payload                      | payload length       |
/// | `FetchChunk`  | chunk hash                               | 0                    |
/// | `DeleteChunk` | chunk hash                               | 0                    |
/// | `StoreLink`   | link record                              | 0 (128 B at rest)    |
/// | `Distribute`  | stripe hash, (index, hash, payload) list | sum of payloads      |
///
/// Control fields ride along with the request's round trip and are not
/// metered; only chunk payloads occupy bandwidth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    StoreChunk {
        hash: ChunkHash,
        data: Bytes,
    },
    FetchChunk {
        hash: ChunkHash,
    },
    DeleteChunk {
        hash: ChunkHash,
    },
    StoreLink {
        record: LinkRecord,
    },
    Distribute {
        stripe_hash: Digest,
        chunks: Vec<(usize, ChunkHash, Bytes)>,
    },
}

impl Message {
    pub fn payload_bytes(&self) -> u64 {
        match self {
            Message::StoreChunk { data, .. } => data.len() as u64,
            Message::Distribute { chunks, .. } => {
                chunks.iter().map(|(_, _, d)| d.len() as u64).sum()
            }
            Message::FetchChunk { .. }
            | Message::DeleteChunk { .. }
            | Message::StoreLink { .. } => 0,
        }
    }
}
