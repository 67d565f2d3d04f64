//! Client-side write and read of whole files, timed on the simulated network.
//!
//! Writes partition and encode the file, fetch the slot tables, plan every
//! stripe, send each chunk to the master of the organization that will hold
//! it, let the master forward it to the holder, record links, and finally
//! publish the file tree. Nothing is published unless every chunk landed.
//!
//! Reads fetch the file tree (the access check happens here) and the slot
//! tables, ask for all n chunks of every stripe at once, decode each stripe
//! from the first k verified chunks and cancel the rest.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use bytes::Bytes;

use crate::cluster::{Cluster, ClusterError, Undo};
use crate::erasure::{encode_stripe, partition_file, reassemble_file, Stripe};
use crate::hash::{ChunkHash, Digest};
use crate::ledger::{AccessPolicy, FileTree};
use crate::placement::{Overlay, PlacementPlan, Planner, StoreView, LINK_RECORD_BYTES};
use crate::simnet::{EndpointId, EventKind, Rtt, Simulator, TransferId};

/// A client identity and the organization whose network it uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Client {
    pub id: String,
    pub gateway: String,
}

impl Client {
    pub fn new(id: &str, gateway: &str) -> Self {
        Client {
            id: id.to_owned(),
            gateway: gateway.to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultAction {
    Kill,
    Revive,
}

/// A liveness change at a simulated instant during one operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub at: f64,
    pub node: String,
    pub action: FaultAction,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WriteOptions {
    pub policy: AccessPolicy,
    /// Organizations that may not hold chunks of this file.
    pub exclusions: BTreeSet<String>,
    pub faults: Vec<Fault>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadOptions {
    /// Finish each stripe before requesting the next.
    pub sequential: bool,
    pub faults: Vec<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriteReceipt {
    pub fid: Digest,
    pub stripes: usize,
    pub chunks: usize,
    pub links_created: usize,
    pub link_bytes: u64,
    /// Simulated seconds from the first request to the ledger acknowledgment.
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub data: Bytes,
    /// Simulated seconds until the last stripe decoded.
    pub latency: f64,
    pub chunk_requests: usize,
    pub redirects: usize,
    /// Chunk hashes deleted because this read used the file's last token.
    pub deleted: usize,
}

const TAG_TREE: u64 = u64::MAX;
const TAG_TABLES: u64 = u64::MAX - 1;
const TAG_LEDGER: u64 = u64::MAX - 2;
const LINK_TAG_BASE: u64 = 1 << 48;

struct Net {
    sim: Simulator,
    ids: HashMap<String, EndpointId>,
    client: EndpointId,
}

impl Net {
    fn new(
        cluster: &Cluster,
        client: &Client,
        faults: &[Fault],
        trace: bool,
    ) -> Result<Self, ClusterError> {
        if !cluster.orgs.contains_key(&client.gateway) {
            return Err(ClusterError::Unknown(client.gateway.clone()));
        }
        let net = &cluster.config.network;
        let mut sim = Simulator::new(Rtt {
            intra: net.rtt_intra_ms / 1000.0,
            inter: net.rtt_inter_ms / 1000.0,
        });
        if !trace {
            sim = sim.without_trace();
        }
        let mut ids = HashMap::new();
        for node in cluster.nodes.values() {
            let id =
                sim.add_endpoint(node.id(), &node.info.org, node.info.bandwidth_mbps as f64)?;
            if cluster.dead.contains(node.id()) {
                sim.kill(id);
            }
            ids.insert(node.id().to_owned(), id);
        }
        let client_ep = sim.add_endpoint(
            &format!("client:{}", client.id),
            &client.gateway,
            net.client_bandwidth_mbps as f64,
        )?;
        for f in faults {
            let id = *ids
                .get(&f.node)
                .ok_or_else(|| ClusterError::Unknown(f.node.clone()))?;
            match f.action {
                FaultAction::Kill => sim.schedule_kill(f.at, id),
                FaultAction::Revive => sim.schedule_revive(f.at, id),
            }
        }
        Ok(Net {
            sim,
            ids,
            client: client_ep,
        })
    }

    fn ep(&self, node: &str) -> EndpointId {
        self.ids[node]
    }

    /// The endpoint of a failed transfer that is down.
    fn culprit(&self, src: EndpointId, dst: EndpointId) -> String {
        let down = if self.sim.is_alive(src) { dst } else { src };
        self.sim.name(down).to_owned()
    }
}

/// Carries liveness changes that fired during an operation over to the
/// cluster.
fn settle_faults(cluster: &mut Cluster, faults: &[Fault], until: f64) {
    let mut fired: Vec<&Fault> = faults.iter().filter(|f| f.at <= until).collect();
    fired.sort_by(|a, b| a.at.total_cmp(&b.at));
    for f in fired {
        match f.action {
            FaultAction::Kill => {
                cluster.dead.insert(f.node.clone());
            }
            FaultAction::Revive => {
                cluster.dead.remove(&f.node);
            }
        }
    }
}

/// Encodes `data` into stripes with the cluster's code and chunk size.
pub fn encode_file(cluster: &Cluster, data: &Bytes) -> Result<(Vec<Stripe>, u64), ClusterError> {
    let partition = partition_file(
        data,
        cluster.config.storage.chunk_size,
        cluster.params.data_chunks,
    );
    let stripes = partition
        .groups
        .into_iter()
        .enumerate()
        .map(|(i, group)| encode_stripe(&cluster.codec, i, group))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((stripes, partition.original_length))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum WriteStage {
    ToMaster,
    ToHolder,
    Stored,
}

/// Stores `data` for `client`. All-or-nothing: on any failure every chunk
/// and link stored by this call is removed and mirror books are restored.
pub fn write_file(
    cluster: &mut Cluster,
    client: &Client,
    data: Bytes,
    opts: &WriteOptions,
) -> Result<WriteReceipt, ClusterError> {
    write_file_traced(cluster, client, data, opts, false).map(|(r, _)| r)
}

/// [`write_file`] that also returns the network trace as CSV.
pub fn write_file_traced(
    cluster: &mut Cluster,
    client: &Client,
    data: Bytes,
    opts: &WriteOptions,
    trace: bool,
) -> Result<(WriteReceipt, String), ClusterError> {
    let (stripes, original_length) = encode_file(cluster, &data)?;
    drop(data);
    let tree = FileTree::new(
        stripes
            .iter()
            .map(|s| s.chunks.iter().map(|c| c.hash).collect())
            .collect(),
        original_length,
        &client.id,
    );
    if cluster.ledger.contains(&tree.file_hash) {
        return Err(crate::ledger::LedgerError::DuplicateFid(tree.file_hash).into());
    }

    let saved_mirrors = cluster.mirrors.clone();
    let saved_seq = cluster.link_seq;
    let plans = {
        let planner = Planner {
            params: &cluster.params,
            tables: &cluster.tables,
            orgs: &cluster.orgs,
        };
        let mut overlay = Overlay::new(&cluster.nodes);
        let mut plans = Vec::with_capacity(stripes.len());
        for s in &stripes {
            let hashes: Vec<ChunkHash> = s.chunks.iter().map(|c| c.hash).collect();
            let plan = planner.plan_stripe(
                s.stripe_hash,
                &hashes,
                &opts.exclusions,
                &mut cluster.mirrors,
                &overlay,
                &mut cluster.link_seq,
            );
            match plan {
                Ok(p) => {
                    overlay.add_plan(&p);
                    plans.push(p);
                }
                Err(e) => {
                    cluster.mirrors = saved_mirrors;
                    cluster.link_seq = saved_seq;
                    return Err(e.into());
                }
            }
        }
        plans
    };

    let mut undo = Undo::default();
    let outcome = run_write(cluster, client, &stripes, &plans, opts, trace, &mut undo);
    let (latency, csv) = match outcome {
        Ok(v) => v,
        Err((e, until)) => {
            cluster.rollback(undo);
            cluster.mirrors = saved_mirrors;
            cluster.link_seq = saved_seq;
            settle_faults(cluster, &opts.faults, until);
            return Err(e);
        }
    };
    settle_faults(cluster, &opts.faults, latency);
    let links_created: usize = plans.iter().map(|p| p.links.len()).sum();
    let fid = cluster.ledger.put_file_tree(tree, opts.policy.clone())?;
    Ok((
        WriteReceipt {
            fid,
            stripes: stripes.len(),
            chunks: stripes.len() * cluster.params.total_chunks,
            links_created,
            link_bytes: links_created as u64 * LINK_RECORD_BYTES,
            latency,
        },
        csv,
    ))
}

type Aborted = (ClusterError, f64);

fn run_write(
    cluster: &mut Cluster,
    client: &Client,
    stripes: &[Stripe],
    plans: &[PlacementPlan],
    opts: &WriteOptions,
    trace: bool,
    undo: &mut Undo,
) -> Result<(f64, String), Aborted> {
    let n = cluster.params.total_chunks;
    let mut net = Net::new(cluster, client, &opts.faults, trace).map_err(|e| (e, 0.0))?;
    let mut stage = vec![WriteStage::ToMaster; stripes.len() * n];
    // Links go out from the holder organization's master once the chunk
    // reaches it: (chunk tag, sender, site, record).
    let mut links = Vec::new();
    for (s, plan) in plans.iter().enumerate() {
        for l in &plan.links {
            let e = plan
                .entries
                .iter()
                .find(|e| e.chunk_hash == l.record.chunk_hash && e.holder == l.record.holder)
                .expect("link belongs to an entry");
            let sender = cluster.orgs[&e.holder_org].master.clone();
            links.push((
                (s * n + e.index) as u64,
                sender,
                l.site.clone(),
                l.record.clone(),
            ));
        }
    }
    let mut links_by_chunk: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, l) in links.iter().enumerate() {
        links_by_chunk.entry(l.0).or_default().push(i);
    }
    let mut endpoints: HashMap<TransferId, (EndpointId, EndpointId)> = HashMap::new();
    let mut outstanding = stage.len() + links.len();

    let entry = |tag: u64| {
        let (s, j) = (tag as usize / n, tag as usize % n);
        (&plans[s].entries[j], &stripes[s].chunks[j])
    };
    let rtt_intra = net.sim.rtt().intra;
    net.sim.schedule_timer(rtt_intra, TAG_TABLES);
    if outstanding == 0 {
        net.sim.schedule_timer(rtt_intra, TAG_LEDGER);
    }
    let mut finished = None;
    while let Some(ev) = net.sim.next_event() {
        let now = ev.time;
        let fail = |e: ClusterError| (e, now);
        match ev.kind {
            EventKind::Timer if ev.tag == TAG_TABLES => {
                for tag in 0..stage.len() as u64 {
                    let (e, chunk) = entry(tag);
                    let master = net.ep(&cluster.orgs[&e.holder_org].master);
                    let id =
                        net.sim
                            .start_transfer(net.client, master, chunk.data.len() as u64, tag);
                    endpoints.insert(id, (net.client, master));
                }
                if outstanding == 0 {
                    net.sim.schedule_timer(rtt_intra, TAG_LEDGER);
                }
            }
            EventKind::Timer if ev.tag == TAG_LEDGER => {
                finished = Some(now);
                break;
            }
            EventKind::Timer => {}
            EventKind::Failed(id) => {
                let (src, dst) = endpoints[&id];
                return Err(fail(ClusterError::NodeDown(net.culprit(src, dst))));
            }
            EventKind::Delivered(_) if ev.tag >= LINK_TAG_BASE => {
                let (_, _, site, record) = &links[(ev.tag - LINK_TAG_BASE) as usize];
                cluster
                    .store_link_at(site, record.clone(), undo)
                    .map_err(fail)?;
                outstanding -= 1;
            }
            EventKind::Delivered(_) => {
                let tag = ev.tag;
                let (e, chunk) = entry(tag);
                let master_name = &cluster.orgs[&e.holder_org].master;
                match stage[tag as usize] {
                    WriteStage::ToMaster => {
                        for &li in links_by_chunk.get(&tag).into_iter().flatten() {
                            let (_, sender, site, _) = &links[li];
                            let (a, b) = (net.ep(sender), net.ep(site));
                            let id = net.sim.start_transfer(a, b, 0, LINK_TAG_BASE + li as u64);
                            endpoints.insert(id, (a, b));
                        }
                        if e.holder == *master_name {
                            cluster
                                .store_chunk_at(&e.holder, chunk.hash, chunk.data.clone(), undo)
                                .map_err(fail)?;
                            stage[tag as usize] = WriteStage::Stored;
                            outstanding -= 1;
                        } else {
                            let (a, b) = (net.ep(master_name), net.ep(&e.holder));
                            let id = net.sim.start_transfer(a, b, chunk.data.len() as u64, tag);
                            endpoints.insert(id, (a, b));
                            stage[tag as usize] = WriteStage::ToHolder;
                        }
                    }
                    WriteStage::ToHolder => {
                        cluster
                            .store_chunk_at(&e.holder, chunk.hash, chunk.data.clone(), undo)
                            .map_err(fail)?;
                        stage[tag as usize] = WriteStage::Stored;
                        outstanding -= 1;
                    }
                    WriteStage::Stored => unreachable!("chunk stored twice"),
                }
            }
        }
        if outstanding == 0 && finished.is_none() && !matches!(ev.kind, EventKind::Timer) {
            net.sim.schedule_timer(rtt_intra, TAG_LEDGER);
            finished = Some(f64::NAN);
        }
    }
    match finished {
        Some(t) if t.is_finite() => Ok((t, net.sim.trace_csv())),
        _ => Err((ClusterError::NodeDown("network".into()), net.sim.now())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ReadStage {
    /// Data coming from `from`.
    Fetching {
        from: String,
        fallback: bool,
    },
    /// Request sent to the designated node, which will point at `target`.
    AskDesignated {
        designated: String,
        consult: Option<String>,
        target: String,
    },
    /// Designated node asking its master.
    AskMaster {
        target: String,
    },
    /// Looking for any live holder.
    Probing,
    Done,
    Lost,
}

struct StripeRead {
    received: Vec<(usize, Bytes)>,
    lost: usize,
    done: bool,
}

/// Reads file `fid` as `client`.
pub fn read_file(
    cluster: &mut Cluster,
    client: &Client,
    fid: &Digest,
    opts: &ReadOptions,
) -> Result<ReadOutcome, ClusterError> {
    read_file_traced(cluster, client, fid, opts, false).map(|(r, _)| r)
}

/// [`read_file`] that also returns the network trace as CSV.
pub fn read_file_traced(
    cluster: &mut Cluster,
    client: &Client,
    fid: &Digest,
    opts: &ReadOptions,
    trace: bool,
) -> Result<(ReadOutcome, String), ClusterError> {
    let grant = cluster.ledger.get_file_tree(fid, &client.id)?;
    let result = run_read(cluster, client, &grant.tree, opts, trace);
    let until = match &result {
        Ok((o, _)) => o.latency,
        Err((_, t)) => *t,
    };
    settle_faults(cluster, &opts.faults, until);
    let mut deleted = 0;
    if let Some(hashes) = &grant.deletions {
        cluster.delete_everywhere(hashes)?;
        deleted = hashes.len();
    }
    let (mut outcome, csv) = result.map_err(|(e, _)| e)?;
    outcome.deleted = deleted;
    Ok((outcome, csv))
}

fn run_read(
    cluster: &Cluster,
    client: &Client,
    tree: &FileTree,
    opts: &ReadOptions,
    trace: bool,
) -> Result<(ReadOutcome, String), Aborted> {
    let n = cluster.params.total_chunks;
    let k = cluster.params.data_chunks;
    let j_count = tree.stripes.len();
    let mut net = Net::new(cluster, client, &opts.faults, trace).map_err(|e| (e, 0.0))?;
    let rtt_intra = net.sim.rtt().intra;
    let rtt_inter = net.sim.rtt().inter;
    net.sim.schedule_timer(rtt_intra, TAG_TREE);

    let mut stage: Vec<ReadStage> = vec![ReadStage::Probing; j_count * n];
    let mut inflight: Vec<Option<TransferId>> = vec![None; j_count * n];
    let mut stripes: Vec<StripeRead> = (0..j_count)
        .map(|_| StripeRead {
            received: Vec::with_capacity(k),
            lost: 0,
            done: false,
        })
        .collect();
    let mut decoded: Vec<Option<Vec<Bytes>>> = vec![None; j_count];
    let mut remaining = j_count;
    let mut next_stripe = 0usize;
    let mut requests = 0usize;
    let mut redirects = 0usize;
    let mut latency = 2.0 * rtt_intra;
    let hash_of = |tag: usize| tree.stripes[tag / n].chunk_hashes[tag % n];

    // Picks the first hop for chunk `tag` and starts it.
    let start = |net: &mut Net,
                 tag: usize,
                 stage: &mut Vec<ReadStage>,
                 inflight: &mut Vec<Option<TransferId>>| {
        let h = hash_of(tag);
        let d = cluster.tables.designate(&h);
        let master = &cluster.orgs[&d.org].master;
        let nodes = &cluster.nodes;
        let via = |target: String, consult: Option<String>| ReadStage::AskDesignated {
            designated: d.node.clone(),
            consult,
            target,
        };
        let next = if !net.sim.is_alive(net.ep(&d.node)) {
            ReadStage::Probing
        } else if nodes.holds(&d.node, &h) {
            ReadStage::Fetching {
                from: d.node.clone(),
                fallback: false,
            }
        } else if let Some(l) = nodes.link(&d.node, &h) {
            via(l.holder.clone(), None)
        } else if *master != d.node && net.sim.is_alive(net.ep(master)) && nodes.holds(master, &h) {
            via(master.clone(), Some(master.clone()))
        } else if let (true, Some(l)) = (
            *master != d.node && net.sim.is_alive(net.ep(master)),
            nodes.link(master, &h),
        ) {
            via(l.holder.clone(), Some(master.clone()))
        } else {
            ReadStage::Probing
        };
        advance(net, cluster, tag, next, &h, stage, inflight, rtt_inter);
    };

    while let Some(ev) = net.sim.next_event() {
        let now = ev.time;
        match ev.kind {
            EventKind::Timer if ev.tag == TAG_TREE => net.sim.schedule_timer(rtt_intra, TAG_TABLES),
            EventKind::Timer if ev.tag == TAG_TABLES => {
                if j_count == 0 {
                    break;
                }
                let first = if opts.sequential { 1 } else { j_count };
                for s in 0..first {
                    for j in 0..n {
                        requests += 1;
                        start(&mut net, s * n + j, &mut stage, &mut inflight);
                    }
                }
                next_stripe = first;
            }
            _ => {
                let tag = ev.tag as usize;
                let s = tag / n;
                if s >= j_count || stripes[s].done {
                    continue;
                }
                let h = hash_of(tag);
                let current = std::mem::replace(&mut stage[tag], ReadStage::Lost);
                inflight[tag] = None;
                let next = match (ev.kind, current) {
                    (EventKind::Failed(_), ReadStage::Fetching { fallback: true, .. }) => {
                        ReadStage::Lost
                    }
                    (EventKind::Failed(_), _) => ReadStage::Probing,
                    (EventKind::Timer, ReadStage::Probing) => {
                        let live = cluster
                            .live_holders(&h)
                            .into_iter()
                            .find(|n| net.sim.is_alive(net.ep(n)));
                        match live {
                            Some(holder) => ReadStage::Fetching {
                                from: holder.to_owned(),
                                fallback: true,
                            },
                            None => ReadStage::Lost,
                        }
                    }
                    (
                        EventKind::Delivered(_),
                        ReadStage::AskDesignated {
                            designated,
                            consult,
                            target,
                        },
                    ) => match consult {
                        Some(master) => {
                            stage[tag] = ReadStage::AskMaster { target };
                            let (a, b) = (net.ep(&designated), net.ep(&master));
                            inflight[tag] = Some(net.sim.start_transfer(a, b, 0, tag as u64));
                            continue;
                        }
                        None => {
                            redirects += 1;
                            ReadStage::Fetching {
                                from: target,
                                fallback: false,
                            }
                        }
                    },
                    (EventKind::Delivered(_), ReadStage::AskMaster { target }) => {
                        redirects += 1;
                        ReadStage::Fetching {
                            from: target,
                            fallback: false,
                        }
                    }
                    (EventKind::Delivered(_), ReadStage::Fetching { from, fallback }) => {
                        let data = cluster.nodes[&from].chunk(&h).cloned();
                        match data {
                            Some(d) if Digest::of(&d) == h => {
                                stripes[s].received.push((tag % n, d));
                                ReadStage::Done
                            }
                            _ if fallback => ReadStage::Lost,
                            _ => ReadStage::Probing,
                        }
                    }
                    (_, other) => other,
                };
                if matches!(next, ReadStage::Lost) {
                    stripes[s].lost += 1;
                }
                let finished_chunk = matches!(next, ReadStage::Done | ReadStage::Lost);
                if !finished_chunk {
                    advance(
                        &mut net,
                        cluster,
                        tag,
                        next,
                        &h,
                        &mut stage,
                        &mut inflight,
                        rtt_inter,
                    );
                    continue;
                }
                stage[tag] = next;
                if stripes[s].received.len() == k {
                    stripes[s].done = true;
                    for j in 0..n {
                        if let Some(id) = inflight[s * n + j].take() {
                            net.sim.cancel(id);
                        }
                    }
                    let chunks = std::mem::take(&mut stripes[s].received);
                    let data = cluster.codec.decode(chunks).map_err(|e| (e.into(), now))?;
                    let expected = &tree.stripes[s].chunk_hashes[..k];
                    if data.iter().zip(expected).any(|(d, h)| Digest::of(d) != *h) {
                        return Err((ClusterError::Integrity(s), now));
                    }
                    decoded[s] = Some(data);
                    remaining -= 1;
                    latency = now;
                    if remaining == 0 {
                        break;
                    }
                    if opts.sequential && next_stripe < j_count {
                        for j in 0..n {
                            requests += 1;
                            start(&mut net, next_stripe * n + j, &mut stage, &mut inflight);
                        }
                        next_stripe += 1;
                    }
                } else if n - stripes[s].lost < k {
                    return Err((
                        ClusterError::Unrecoverable {
                            stripe: s,
                            reachable: n - stripes[s].lost,
                            needed: k,
                        },
                        now,
                    ));
                }
            }
        }
    }
    if remaining > 0 {
        let s = decoded.iter().position(Option::is_none).unwrap_or(0);
        return Err((
            ClusterError::Unrecoverable {
                stripe: s,
                reachable: n - stripes[s].lost,
                needed: k,
            },
            net.sim.now(),
        ));
    }
    let data = reassemble_file(&decoded, tree.original_length).map_err(|e| (e.into(), latency))?;
    Ok((
        ReadOutcome {
            data,
            latency,
            chunk_requests: requests,
            redirects,
            deleted: 0,
        },
        net.sim.trace_csv(),
    ))
}

/// Starts the network action for `stage` of chunk `tag`.
#[allow(clippy::too_many_arguments)]
fn advance(
    net: &mut Net,
    cluster: &Cluster,
    tag: usize,
    next: ReadStage,
    hash: &ChunkHash,
    stage: &mut [ReadStage],
    inflight: &mut [Option<TransferId>],
    probe_wait: f64,
) {
    match &next {
        ReadStage::Fetching { from, .. } => {
            let bytes = cluster.nodes[from]
                .chunk(hash)
                .map_or(0, |d| d.len() as u64);
            inflight[tag] =
                Some(
                    net.sim
                        .start_transfer(net.ep(from), net.client, bytes, tag as u64),
                );
        }
        ReadStage::AskDesignated { designated, .. } => {
            inflight[tag] =
                Some(
                    net.sim
                        .start_transfer(net.client, net.ep(designated), 0, tag as u64),
                );
        }
        ReadStage::Probing => net.sim.schedule_timer(probe_wait, tag as u64),
        ReadStage::AskMaster { .. } | ReadStage::Done | ReadStage::Lost => {}
    }
    stage[tag] = next;
}

/// Full-copy stand-in for comparison: one node keeps the whole file.
#[derive(Debug, Default, Clone)]
pub struct Baseline {
    files: BTreeMap<Digest, (String, Bytes)>,
}

impl Baseline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `data` on `holder` locally: no network time.
    pub fn write(
        &mut self,
        cluster: &Cluster,
        holder: &str,
        data: Bytes,
    ) -> Result<(Digest, f64), ClusterError> {
        if cluster.node(holder).is_none() {
            return Err(ClusterError::Unknown(holder.to_owned()));
        }
        if !cluster.is_alive(holder) {
            return Err(ClusterError::NodeDown(holder.to_owned()));
        }
        let fid = Digest::of(&data);
        self.files.insert(fid, (holder.to_owned(), data));
        Ok((fid, 0.0))
    }

    /// Streams the whole file from its holder to `client`.
    pub fn read(
        &self,
        cluster: &Cluster,
        client: &Client,
        fid: &Digest,
    ) -> Result<(Bytes, f64), ClusterError> {
        let (holder, data) = self
            .files
            .get(fid)
            .ok_or(ClusterError::Ledger(crate::ledger::LedgerError::NotFound))?;
        let mut net = Net::new(cluster, client, &[], false)?;
        let src = net.ep(holder);
        net.sim
            .start_transfer(src, net.client, data.len() as u64, 0);
        match net.sim.next_event().map(|e| e.kind) {
            Some(EventKind::Delivered(_)) => Ok((data.clone(), net.sim.now())),
            _ => Err(ClusterError::NodeDown(holder.clone())),
        }
    }

    pub fn remove(&mut self, fid: &Digest) {
        self.files.remove(fid);
    }
}
