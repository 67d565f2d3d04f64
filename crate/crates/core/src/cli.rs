//! The `dbnode` command line.
//!
//! Every command except the benchmarks works on a state directory (`--state`,
//! default `./dbnode-state`) created by `init`. Tabular output is CSV,
//! written to stdout or to `--out`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | internal error |
//! | 2 | bad command line |
//! | 3 | invalid configuration or code parameters |
//! | 4 | state directory missing, corrupt or already initialized |
//! | 5 | cannot read input or write output |
//! | 6 | unknown file, node or organization |
//! | 7 | permission denied |
//! | 8 | placement impossible |
//! | 9 | nodes unavailable: write aborted or stripe unrecoverable |
//! | 10 | file already stored |
//! | 11 | integrity check failed |

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use crate::bench::{
    bench_latency, bench_links, latency_result, links_result, BandwidthProfile, LatencyBench,
    DEFAULT_SIZES_MB, DEFAULT_TRIALS,
};
use crate::cluster::{Cluster, ClusterError};
use crate::config::ClusterConfig;
use crate::hash::Digest;
use crate::hashslot::SlotTable;
use crate::ledger::{AccessPolicy, LedgerError};
use crate::protocol::{read_file_traced, write_file_traced, Client, ReadOptions, WriteOptions};

pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const STATE: u8 = 4;
    pub const IO: u8 = 5;
    pub const NOT_FOUND: u8 = 6;
    pub const PERMISSION_DENIED: u8 = 7;
    pub const PLACEMENT: u8 = 8;
    pub const UNAVAILABLE: u8 = 9;
    pub const DUPLICATE: u8 = 10;
    pub const INTEGRITY: u8 = 11;
}

#[derive(Debug, Parser)]
#[command(
    name = "dbnode",
    version,
    about = "Erasure-coded consortium file storage on a simulated network"
)]
pub struct Cli {
    /// State directory of the cluster.
    #[arg(long, global = true, default_value = "dbnode-state")]
    pub state: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a cluster from a TOML configuration.
    Init { config: PathBuf },
    /// Store a file. Prints `fid,stripes,chunks,links,link_bytes,latency_s`.
    Put {
        file: PathBuf,
        #[command(flatten)]
        who: Identity,
        /// Reads allowed before the file is deleted.
        #[arg(long)]
        tokens: Option<u64>,
        /// Identity allowed to read; repeatable. None means anyone.
        #[arg(long)]
        permit: Vec<String>,
        /// Identity refused; repeatable.
        #[arg(long)]
        ban: Vec<String>,
        /// Organization that must not hold chunks; repeatable.
        #[arg(long)]
        exclude: Vec<String>,
        /// Receipt CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Network trace CSV destination.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Read a file. Prints `fid,bytes,chunk_requests,redirects,deleted,latency_s`.
    Get {
        fid: String,
        /// Where to write the file content.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        who: Identity,
        /// Request one stripe at a time.
        #[arg(long)]
        sequential: bool,
        /// Network trace CSV destination.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Mark a node as failed.
    KillNode { node: String },
    /// Mark every node of an organization as failed.
    KillOrg { org: String },
    /// Bring a node or organization back; `--all` revives everything.
    #[command(group(ArgGroup::new("what").required(true).args(["id", "all"])))]
    Revive {
        id: Option<String>,
        #[arg(long)]
        all: bool,
    },
    /// Link counts as random chunks accumulate. Columns `chunks,max_links,total_links`.
    BenchLinks {
        /// Topology; defaults to three organizations of two nodes.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        max_chunks: usize,
        #[arg(long, default_value_t = 100)]
        step: usize,
        /// Overrides the configuration seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean write/read latency of DBNode and the single-copy baseline on
    /// four organizations of three nodes. Columns
    /// `size_mb,system,op,mean_latency_s`.
    #[command(group(ArgGroup::new("profile").args(["uniform", "stepped"])))]
    BenchLatency {
        /// Every node at 1,000 Mbps (default).
        #[arg(long)]
        uniform: bool,
        /// Organizations at 400, 800, 1,200 and 1,600 Mbps.
        #[arg(long)]
        stepped: bool,
        /// File sizes in MB.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES_MB)]
        sizes: Vec<u64>,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the slot tables. Columns `layer,scope,target,weight,slots,range`.
    ShowTables {
        /// Print the canonical ledger text instead of CSV.
        #[arg(long)]
        canonical: bool,
        #[arg(long, value_enum, default_value_t = Layers::All)]
        layer: Layers,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct Identity {
    /// Client identity.
    #[arg(long = "as", default_value = "client")]
    pub id: String,
    /// Organization the client connects through; defaults to the first.
    #[arg(long)]
    pub gateway: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layers {
    Inter,
    Intra,
    All,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        Failure::new(exit_code(&e), e.to_string())
    }
}

pub fn exit_code(e: &ClusterError) -> u8 {
    use crate::placement::PlacementError as P;
    match e {
        ClusterError::Config(_) => exit::CONFIG,
        ClusterError::Io(_) | ClusterError::State(_) => exit::STATE,
        ClusterError::Ledger(LedgerError::PermissionDenied(_)) => exit::PERMISSION_DENIED,
        ClusterError::Ledger(LedgerError::DuplicateFid(_)) => exit::DUPLICATE,
        ClusterError::Ledger(LedgerError::NotFound | LedgerError::UnknownOrganization(_)) => {
            exit::NOT_FOUND
        }
        ClusterError::Unknown(_)
        | ClusterError::Placement(P::UnknownOrganization(_) | P::NotFound) => exit::NOT_FOUND,
        ClusterError::Placement(_) => exit::PLACEMENT,
        ClusterError::NodeDown(_) | ClusterError::Unrecoverable { .. } => exit::UNAVAILABLE,
        ClusterError::Node(crate::node::NodeError::CapacityExceeded { .. }) => exit::PLACEMENT,
        ClusterError::Integrity(_) | ClusterError::Erasure(_) => exit::INTEGRITY,
        _ => exit::INTERNAL,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let text = e.render().to_string();
            let _ = if code == exit::OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => exit::OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::new(exit::IO, e.to_string())),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes)
        .map_err(|e| Failure::new(exit::IO, format!("cannot write {}: {e}", path.display())))
}

fn open(state: &Path) -> Result<Cluster, Failure> {
    Cluster::open(state).map_err(|e| match e {
        ClusterError::Io(io) if io.kind() == io::ErrorKind::NotFound => Failure::new(
            exit::STATE,
            format!("no cluster in {}; run `dbnode init` first", state.display()),
        ),
        other => other.into(),
    })
}

fn client(cluster: &Cluster, who: &Identity) -> Client {
    let gateway = who
        .gateway
        .clone()
        .unwrap_or_else(|| cluster.orgs().keys().next().cloned().unwrap_or_default());
    Client::new(&who.id, &gateway)
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let state = cli.state.as_path();
    match cli.command {
        Command::Init { config } => {
            let config = ClusterConfig::load(&config).map_err(ClusterError::from)?;
            fs::create_dir_all(state).map_err(|e| Failure::new(exit::STATE, e.to_string()))?;
            let cluster = Cluster::create(config, state)?;
            let p = cluster.params();
            let _ = writeln!(
                stdout,
                "initialized {} organizations, {} nodes, ({},{}) code over {} groups in {}",
                p.organizations,
                p.nodes,
                p.total_chunks,
                p.data_chunks,
                p.groups,
                state.display()
            );
            Ok(())
        }
        Command::Put {
            file,
            who,
            tokens,
            permit,
            ban,
            exclude,
            out,
            trace,
        } => {
            let mut cluster = open(state)?;
            let data = fs::read(&file).map_err(|e| {
                Failure::new(exit::IO, format!("cannot read {}: {e}", file.display()))
            })?;
            let mut policy = AccessPolicy::open().permit(permit).ban(ban);
            if let Some(t) = tokens {
                policy = policy.with_tokens(t);
            }
            let opts = WriteOptions {
                policy,
                exclusions: exclude.into_iter().collect(),
                faults: Vec::new(),
            };
            let client = client(&cluster, &who);
            let (r, csv) =
                write_file_traced(&mut cluster, &client, data.into(), &opts, trace.is_some())?;
            cluster.save()?;
            if let Some(t) = trace {
                write_file(&t, csv.as_bytes())?;
            }
            let text = format!(
                "fid,stripes,chunks,links,link_bytes,latency_s\n{},{},{},{},{},{:.6}\n",
                r.fid, r.stripes, r.chunks, r.links_created, r.link_bytes, r.latency
            );
            emit(&text, out.as_deref(), stdout)
        }
        Command::Get {
            fid,
            out,
            who,
            sequential,
            trace,
        } => {
            let fid: Digest = fid.parse().map_err(|_| {
                Failure::new(exit::NOT_FOUND, format!("{fid:?} is not a file hash"))
            })?;
            let mut cluster = open(state)?;
            let client = client(&cluster, &who);
            let opts = ReadOptions {
                sequential,
                faults: Vec::new(),
            };
            let result = read_file_traced(&mut cluster, &client, &fid, &opts, trace.is_some());
            // Token use is recorded on the ledger even when the read fails.
            cluster.save()?;
            let (r, csv) = result?;
            write_file(&out, &r.data)?;
            if let Some(t) = trace {
                write_file(&t, csv.as_bytes())?;
            }
            let text = format!(
                "fid,bytes,chunk_requests,redirects,deleted,latency_s\n{},{},{},{},{},{:.6}\n",
                fid,
                r.data.len(),
                r.chunk_requests,
                r.redirects,
                r.deleted,
                r.latency
            );
            emit(&text, None, stdout)
        }
        Command::KillNode { node } => {
            let mut cluster = open(state)?;
            cluster.kill_node(&node)?;
            cluster.save()?;
            Ok(())
        }
        Command::KillOrg { org } => {
            let mut cluster = open(state)?;
            cluster.kill_org(&org)?;
            cluster.save()?;
            Ok(())
        }
        Command::Revive { id, all } => {
            let mut cluster = open(state)?;
            match id {
                Some(id) if !all => cluster.revive(&id)?,
                _ => cluster.revive_all(),
            }
            cluster.save()?;
            Ok(())
        }
        Command::BenchLinks {
            config,
            max_chunks,
            step,
            seed,
            out,
        } => {
            if step == 0 {
                return Err(Failure::new(exit::USAGE, "--step must be positive"));
            }
            let mut config = match config {
                Some(p) => ClusterConfig::load(&p).map_err(ClusterError::from)?,
                None => ClusterConfig::three_by_two(),
            };
            if let Some(s) = seed {
                config.seed = s;
            }
            let rows = bench_links(config, max_chunks, step)?;
            emit(
                &links_result(&rows, max_chunks, step).to_csv(),
                out.as_deref(),
                stdout,
            )
        }
        Command::BenchLatency {
            uniform: _,
            stepped,
            sizes,
            trials,
            seed,
            out,
        } => {
            if trials == 0 {
                return Err(Failure::new(exit::USAGE, "--trials must be positive"));
            }
            let profile = if stepped {
                BandwidthProfile::Stepped
            } else {
                BandwidthProfile::Uniform
            };
            let bench = LatencyBench {
                profile,
                sizes_mb: sizes,
                trials,
                seed,
            };
            let rows = bench_latency(&bench, bench.config())?;
            emit(
                &latency_result(&bench, &rows).to_csv(),
                out.as_deref(),
                stdout,
            )
        }
        Command::ShowTables {
            canonical,
            layer,
            out,
        } => {
            let cluster = open(state)?;
            let text = if canonical {
                cluster
                    .ledger()
                    .slot_tables_text()
                    .map_err(ClusterError::from)?
                    .to_owned()
            } else {
                tables_csv(&cluster, layer)
            };
            emit(&text, out.as_deref(), stdout)
        }
    }
}

fn tables_csv(cluster: &Cluster, layer: Layers) -> String {
    let mut out = String::from("layer,scope,target,weight,slots,range\n");
    let mut table = |name: &str, scope: &str, t: &SlotTable| {
        for s in t.shares() {
            let range = match s.start {
                Some(a) if s.count > 0 => format!("{a}-{}", a + s.count - 1),
                Some(_) => "-".into(),
                None => "interleaved".into(),
            };
            out.push_str(&format!(
                "{name},{scope},{},{},{},{range}\n",
                s.target, s.weight, s.count
            ));
        }
    };
    let tables = cluster.tables();
    if layer != Layers::Intra {
        table("inter", "*", &tables.inter);
    }
    if layer != Layers::Inter {
        for (org, t) in &tables.intra {
            table("intra", org, t);
        }
    }
    out
}
