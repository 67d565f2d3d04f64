//! The experiments: link overhead as chunks accumulate, and write/read
//! latency against a single-copy baseline under uniform or stepped
//! bandwidth. Both emit CSV with fixed columns.
//!
//! | experiment | columns |
//! |---|---|
//! | links | `chunks,max_links,total_links` |
//! | latency | `size_mb,system,op,mean_latency_s` |

use std::fmt::Write as _;

use bytes::Bytes;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{Cluster, ClusterError};
use crate::config::ClusterConfig;
use crate::protocol::{read_file, write_file, Baseline, Client, ReadOptions, WriteOptions};

/// Table sizes in MB used when none are given.
pub const DEFAULT_SIZES_MB: [u64; 6] = [10, 20, 30, 100, 200, 300];
pub const DEFAULT_TRIALS: usize = 20;
const MB: u64 = 1_000_000;

/// A finished experiment, printable as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: String,
    pub parameters: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub trials: usize,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Rows whose leading cells equal `key`.
    pub fn find(&self, key: &[&str]) -> Option<&[String]> {
        self.rows
            .iter()
            .find(|r| r.iter().zip(key).all(|(a, b)| a == b))
            .map(Vec::as_slice)
    }
}

pub fn random_bytes(rng: &mut impl RngCore, len: usize) -> Bytes {
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v.into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkRow {
    pub chunks: usize,
    pub max_links: usize,
    pub total_links: usize,
}

/// Stores one-stripe files of random content until `max_chunks` chunks are
/// stored, recording link counts at every multiple of `step`. A row reports
/// the state after the first stripe that reaches its checkpoint.
pub fn bench_links(
    config: ClusterConfig,
    max_chunks: usize,
    step: usize,
) -> Result<Vec<LinkRow>, ClusterError> {
    assert!(step > 0, "step must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let stripe_data = config.storage.chunk_size * config.code.k;
    let mut cluster = Cluster::new(config)?;
    let client = Client::new(
        "bench",
        &cluster.orgs().keys().next().cloned().unwrap_or_default(),
    );
    let mut rows = vec![LinkRow {
        chunks: 0,
        max_links: 0,
        total_links: 0,
    }];
    let mut checkpoint = step;
    while checkpoint <= max_chunks {
        let data = random_bytes(&mut rng, stripe_data);
        write_file(&mut cluster, &client, data, &WriteOptions::default())?;
        let stored = cluster.total_chunks();
        if stored >= checkpoint {
            rows.push(LinkRow {
                chunks: stored,
                max_links: cluster.max_links_per_node(),
                total_links: cluster.total_links(),
            });
            while checkpoint <= stored {
                checkpoint += step;
            }
        }
    }
    Ok(rows)
}

pub fn links_result(rows: &[LinkRow], max_chunks: usize, step: usize) -> ExperimentResult {
    ExperimentResult {
        experiment: "links".into(),
        parameters: vec![
            ("max_chunks".into(), max_chunks.to_string()),
            ("step".into(), step.to_string()),
        ],
        columns: ["chunks", "max_links", "total_links"]
            .map(String::from)
            .into(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.chunks.to_string(),
                    r.max_links.to_string(),
                    r.total_links.to_string(),
                ]
            })
            .collect(),
        trials: 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthProfile {
    /// Every node at 1,000 Mbps.
    Uniform,
    /// Organization i of M at 2000·(i+1)/(M+1) Mbps: 400, 800, 1,200 and
    /// 1,600 for four organizations.
    Stepped,
}

impl BandwidthProfile {
    pub fn mbps(self, org: usize, orgs: usize) -> u64 {
        match self {
            BandwidthProfile::Uniform => 1000,
            BandwidthProfile::Stepped => 2000 * (org as u64 + 1) / (orgs as u64 + 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BandwidthProfile::Uniform => "uniform",
            BandwidthProfile::Stepped => "stepped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyBench {
    pub profile: BandwidthProfile,
    pub sizes_mb: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
}

impl LatencyBench {
    pub fn new(profile: BandwidthProfile) -> Self {
        LatencyBench {
            profile,
            sizes_mb: DEFAULT_SIZES_MB.to_vec(),
            trials: DEFAULT_TRIALS,
            seed: 0,
        }
    }

    /// The four-organization, three-node topology with this profile.
    pub fn config(&self) -> ClusterConfig {
        let profile = self.profile;
        let mut c = ClusterConfig::four_by_three(|i| profile.mbps(i, 4));
        c.seed = self.seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub size_mb: u64,
    pub system: &'static str,
    pub op: &'static str,
    pub mean_latency: f64,
}

/// Runs `bench.trials` trials per size on `config`. Trial t puts the
/// baseline copy in organization `(offset + t) mod M` on a random node, and
/// attaches the client to a random other organization for both systems.
pub fn bench_latency(
    bench: &LatencyBench,
    config: ClusterConfig,
) -> Result<Vec<LatencyRow>, ClusterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(bench.seed);
    let mut cluster = Cluster::new(config)?;
    let orgs: Vec<String> = cluster.orgs().keys().cloned().collect();
    let mut rows = Vec::new();
    for &size in &bench.sizes_mb {
        let mut sums = [0.0f64; 4];
        let offset = rng.gen_range(0..orgs.len());
        for t in 0..bench.trials {
            cluster.reset_storage()?;
            let holder_org = (offset + t) % orgs.len();
            let members = &cluster.orgs()[&orgs[holder_org]].nodes;
            let holder = members[rng.gen_range(0..members.len())].clone();
            let gateway = if orgs.len() > 1 {
                let g = rng.gen_range(0..orgs.len() - 1);
                &orgs[if g >= holder_org { g + 1 } else { g }]
            } else {
                &orgs[0]
            };
            let client = Client::new(&format!("client{t}"), gateway);
            let data = random_bytes(&mut rng, (size * MB) as usize);

            let receipt = write_file(
                &mut cluster,
                &client,
                data.clone(),
                &WriteOptions::default(),
            )?;
            let read = read_file(&mut cluster, &client, &receipt.fid, &ReadOptions::default())?;
            debug_assert_eq!(read.data, data);
            let mut baseline = Baseline::new();
            let (fid, w) = baseline.write(&cluster, &holder, data)?;
            let (_, r) = baseline.read(&cluster, &client, &fid)?;
            for (sum, v) in sums.iter_mut().zip([receipt.latency, read.latency, w, r]) {
                *sum += v;
            }
        }
        let trials = bench.trials.max(1) as f64;
        for (i, (system, op)) in [
            ("dbnode", "write"),
            ("dbnode", "read"),
            ("baseline", "write"),
            ("baseline", "read"),
        ]
        .into_iter()
        .enumerate()
        {
            rows.push(LatencyRow {
                size_mb: size,
                system,
                op,
                mean_latency: sums[i] / trials,
            });
        }
    }
    Ok(rows)
}

pub fn latency_result(bench: &LatencyBench, rows: &[LatencyRow]) -> ExperimentResult {
    let sizes = bench.sizes_mb.iter().fold(String::new(), |mut s, x| {
        if !s.is_empty() {
            s.push(' ');
        }
        let _ = write!(s, "{x}");
        s
    });
    ExperimentResult {
        experiment: "latency".into(),
        parameters: vec![
            ("profile".into(), bench.profile.name().into()),
            ("sizes_mb".into(), sizes),
            ("seed".into(), bench.seed.to_string()),
        ],
        columns: ["size_mb", "system", "op", "mean_latency_s"]
            .map(String::from)
            .into(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.size_mb.to_string(),
                    r.system.into(),
                    r.op.into(),
                    format!("{:.6}", r.mean_latency),
                ]
            })
            .collect(),
        trials: bench.trials,
    }
}
