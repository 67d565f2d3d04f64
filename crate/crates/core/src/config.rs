//! Cluster configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [code]            # erasure code and failure tolerance
//! n = 6             # chunks per stripe
//! k = 3             # data chunks per stripe
//! l = 3             # groups: organizations a stripe spreads over
//! x = 3             # node failures to tolerate
//! y = 1             # organization failures to tolerate
//!
//! [storage]
//! chunk_size = 1000000          # bytes
//!
//! [network]
//! rtt_intra_ms = 1.0
//! rtt_inter_ms = 10.0
//! client_bandwidth_mbps = 10000
//!
//! [[org]]
//! id = "org1"
//!
//! [[org.node]]
//! id = "org1-a"
//! bandwidth_mbps = 1000
//! capacity = 100000000000       # bytes
//! ```
//!
//! N and M are the node and organization counts. Every organization needs the
//! same number of nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erasure::{CodeParams, ParamsError, ValidationReport, DEFAULT_CHUNK_SIZE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad config: {0}")]
    Invalid(String),
    #[error("bad code parameters: {0}")]
    Params(#[from] ParamsError),
    #[error("code parameters rejected: {0}")]
    Constraints(ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageSection {
    pub chunk_size: usize,
}

impl Default for StorageSection {
    fn default() -> Self {
        StorageSection {
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub rtt_intra_ms: f64,
    pub rtt_inter_ms: f64,
    /// Client link; the experiments only limit DBNodes.
    pub client_bandwidth_mbps: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            rtt_intra_ms: 1.0,
            rtt_inter_ms: 10.0,
            client_bandwidth_mbps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub bandwidth_mbps: u64,
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrgConfig {
    pub id: String,
    #[serde(rename = "node")]
    pub nodes: Vec<NodeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default)]
    pub seed: u64,
    pub code: CodeSection,
    #[serde(default)]
    pub storage: StorageSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(rename = "org")]
    pub orgs: Vec<OrgConfig>,
}

/// Default node capacity for generated topologies: 1 TB.
pub const DEFAULT_CAPACITY: u64 = 1_000_000_000_000;

impl ClusterConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ClusterConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> CodeParams {
        CodeParams {
            nodes: self.orgs.iter().map(|o| o.nodes.len()).sum(),
            organizations: self.orgs.len(),
            node_failures: self.code.x,
            org_failures: self.code.y,
            total_chunks: self.code.n,
            data_chunks: self.code.k,
            groups: self.code.l,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.orgs.is_empty() {
            return invalid("no organizations".into());
        }
        let mut ids = BTreeSet::new();
        for org in &self.orgs {
            if org.nodes.is_empty() {
                return invalid(format!("organization {} has no nodes", org.id));
            }
            for id in std::iter::once(&org.id).chain(org.nodes.iter().map(|n| &n.id)) {
                if id.is_empty() || id.contains(char::is_whitespace) {
                    return invalid(format!("identity {id:?} must be non-empty without spaces"));
                }
                if !ids.insert(id.clone()) {
                    return invalid(format!("duplicate identity {id}"));
                }
            }
            for node in &org.nodes {
                if node.bandwidth_mbps == 0 || node.capacity == 0 {
                    return invalid(format!(
                        "node {} needs positive bandwidth and capacity",
                        node.id
                    ));
                }
            }
        }
        if self.storage.chunk_size == 0 {
            return invalid("chunk_size must be positive".into());
        }
        let net = &self.network;
        if !(net.rtt_intra_ms >= 0.0 && net.rtt_inter_ms >= 0.0) || net.client_bandwidth_mbps == 0 {
            return invalid(
                "round trips must be non-negative and client bandwidth positive".into(),
            );
        }
        let report = self.params().validate()?;
        let sizes: BTreeSet<usize> = self.orgs.iter().map(|o| o.nodes.len()).collect();
        if sizes.len() > 1 {
            return invalid("every organization needs the same number of nodes".into());
        }
        if !report.is_ok() {
            return Err(ConfigError::Constraints(report));
        }
        Ok(())
    }

    pub fn org_of(&self, node: &str) -> Option<&str> {
        self.orgs
            .iter()
            .find(|o| o.nodes.iter().any(|n| n.id == node))
            .map(|o| o.id.as_str())
    }

    pub fn node(&self, id: &str) -> Option<&NodeConfig> {
        self.orgs.iter().flat_map(|o| &o.nodes).find(|n| n.id == id)
    }

    pub fn members(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.orgs
            .iter()
            .map(|o| (o.id.clone(), o.nodes.iter().map(|n| n.id.clone()).collect()))
            .collect()
    }

    /// `orgs` organizations of `per_org` nodes named `org<i>` and
    /// `org<i>-n<j>`, 1-based, with bandwidth from `bandwidth(org index)`.
    pub fn grid(
        orgs: usize,
        per_org: usize,
        code: CodeSection,
        bandwidth: impl Fn(usize) -> u64,
    ) -> Self {
        ClusterConfig {
            seed: 0,
            code,
            storage: StorageSection::default(),
            network: NetworkSection::default(),
            orgs: (0..orgs)
                .map(|i| OrgConfig {
                    id: format!("org{}", i + 1),
                    nodes: (0..per_org)
                        .map(|j| NodeConfig {
                            id: format!("org{}-n{}", i + 1, j + 1),
                            bandwidth_mbps: bandwidth(i),
                            capacity: DEFAULT_CAPACITY,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Three organizations of two nodes with the (6,3) code tolerating three
    /// node failures or one organization failure.
    pub fn three_by_two() -> Self {
        Self::grid(
            3,
            2,
            CodeSection {
                n: 6,
                k: 3,
                l: 3,
                x: 3,
                y: 1,
            },
            |_| 1000,
        )
    }

    /// Four organizations of three nodes, (6,3) over three groups.
    pub fn four_by_three(bandwidth: impl Fn(usize) -> u64) -> Self {
        Self::grid(
            4,
            3,
            CodeSection {
                n: 6,
                k: 3,
                l: 3,
                x: 3,
                y: 1,
            },
            bandwidth,
        )
    }
}
