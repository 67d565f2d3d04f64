//! Discrete-event network with fluid fair-share bandwidth.
//!
//! Each endpoint's bandwidth is split equally among the transfers currently
//! moving data through it, and a transfer moves at the smaller of its two
//! endpoint shares. A transfer first spends one round trip (the request) and
//! then streams its bytes. Rates are recomputed whenever a transfer starts or
//! stops streaming. Zero-byte transfers model plain request/response messages.
//!
//! The caller drives the simulation: start transfers and timers, then pull
//! events one at a time with [`Simulator::next_event`] and react to them.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

pub type EndpointId = usize;
pub type TransferId = u64;

/// Bytes per second of one Mbps (1 MB = 10^6 bytes).
pub const BYTES_PER_SEC_PER_MBPS: f64 = 125_000.0;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown endpoint {0:?}")]
    UnknownEndpoint(String),
    #[error("duplicate endpoint {0:?}")]
    DuplicateEndpoint(String),
    #[error("bandwidth of {0:?} must be positive")]
    BadBandwidth(String),
}

/// Round trips between endpoints, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rtt {
    pub intra: f64,
    pub inter: f64,
}

impl Default for Rtt {
    fn default() -> Self {
        Rtt {
            intra: 0.001,
            inter: 0.010,
        }
    }
}

#[derive(Debug, Clone)]
struct Endpoint {
    name: String,
    org: String,
    bytes_per_sec: f64,
    alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Request,
    Streaming,
}

#[derive(Debug, Clone)]
struct Transfer {
    src: EndpointId,
    dst: EndpointId,
    bytes: u64,
    remaining: f64,
    phase: Phase,
    tag: u64,
    rate: f64,
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    RequestDone(TransferId),
    Timer(u64),
    Kill(EndpointId),
    Revive(EndpointId),
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    what: Pending,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// All bytes arrived.
    Delivered(TransferId),
    /// An endpoint was or went down.
    Failed(TransferId),
    Timer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub tag: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub event: &'static str,
    pub src: String,
    pub dst: String,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    now: f64,
    rtt: Rtt,
    endpoints: Vec<Endpoint>,
    by_name: HashMap<String, EndpointId>,
    transfers: BTreeMap<TransferId, Transfer>,
    next_id: TransferId,
    seq: u64,
    heap: BinaryHeap<Reverse<Scheduled>>,
    ready: VecDeque<SimEvent>,
    trace: Option<Vec<TraceRecord>>,
}

impl Simulator {
    pub fn new(rtt: Rtt) -> Self {
        Simulator {
            now: 0.0,
            rtt,
            endpoints: Vec::new(),
            by_name: HashMap::new(),
            transfers: BTreeMap::new(),
            next_id: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            ready: VecDeque::new(),
            trace: Some(Vec::new()),
        }
    }

    /// Stops recording the event trace, for long benchmark runs.
    pub fn without_trace(mut self) -> Self {
        self.trace = None;
        self
    }

    /// Adds an endpoint. Endpoints in the same organization talk at the
    /// intra-organization round trip, others at the inter one.
    pub fn add_endpoint(
        &mut self,
        name: &str,
        org: &str,
        bandwidth_mbps: f64,
    ) -> Result<EndpointId, SimError> {
        if self.by_name.contains_key(name) {
            return Err(SimError::DuplicateEndpoint(name.to_owned()));
        }
        if !bandwidth_mbps.is_finite() || bandwidth_mbps <= 0.0 {
            return Err(SimError::BadBandwidth(name.to_owned()));
        }
        let id = self.endpoints.len();
        self.endpoints.push(Endpoint {
            name: name.to_owned(),
            org: org.to_owned(),
            bytes_per_sec: bandwidth_mbps * BYTES_PER_SEC_PER_MBPS,
            alive: true,
        });
        self.by_name.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn endpoint(&self, name: &str) -> Result<EndpointId, SimError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| SimError::UnknownEndpoint(name.to_owned()))
    }

    pub fn name(&self, id: EndpointId) -> &str {
        &self.endpoints[id].name
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn rtt_between(&self, a: EndpointId, b: EndpointId) -> f64 {
        if self.endpoints[a].org == self.endpoints[b].org {
            self.rtt.intra
        } else {
            self.rtt.inter
        }
    }

    pub fn rtt(&self) -> Rtt {
        self.rtt
    }

    pub fn is_alive(&self, id: EndpointId) -> bool {
        self.endpoints[id].alive
    }

    /// Starts a transfer of `bytes` from `src` to `dst` now. A dead endpoint
    /// makes it fail at once; `src == dst` delivers at once.
    pub fn start_transfer(
        &mut self,
        src: EndpointId,
        dst: EndpointId,
        bytes: u64,
        tag: u64,
    ) -> TransferId {
        let id = self.next_id;
        self.next_id += 1;
        self.record("start", src, dst, bytes);
        if !self.endpoints[src].alive || !self.endpoints[dst].alive {
            self.record("fail", src, dst, bytes);
            self.ready.push_back(SimEvent {
                time: self.now,
                kind: EventKind::Failed(id),
                tag,
            });
            return id;
        }
        if src == dst {
            self.record("deliver", src, dst, bytes);
            self.ready.push_back(SimEvent {
                time: self.now,
                kind: EventKind::Delivered(id),
                tag,
            });
            return id;
        }
        self.transfers.insert(
            id,
            Transfer {
                src,
                dst,
                bytes,
                remaining: bytes as f64,
                phase: Phase::Request,
                tag,
                rate: 0.0,
            },
        );
        let at = self.now + self.rtt_between(src, dst);
        self.schedule(at, Pending::RequestDone(id));
        id
    }

    /// Drops an in-flight transfer without an event. Unknown or finished
    /// transfers are ignored.
    pub fn cancel(&mut self, id: TransferId) {
        if let Some(t) = self.transfers.remove(&id) {
            let sent = t.bytes - t.remaining.round().clamp(0.0, t.bytes as f64) as u64;
            self.record("cancel", t.src, t.dst, sent);
        }
    }

    pub fn schedule_timer(&mut self, delay: f64, tag: u64) {
        self.schedule(self.now + delay.max(0.0), Pending::Timer(tag));
    }

    /// Takes `id` down now: every transfer touching it fails.
    pub fn kill(&mut self, id: EndpointId) {
        self.endpoints[id].alive = false;
        self.record("kill", id, id, 0);
        let doomed: Vec<TransferId> = self
            .transfers
            .iter()
            .filter(|(_, t)| t.src == id || t.dst == id)
            .map(|(k, _)| *k)
            .collect();
        for tid in doomed {
            let t = self.transfers.remove(&tid).expect("listed");
            self.record("fail", t.src, t.dst, t.bytes);
            self.ready.push_back(SimEvent {
                time: self.now,
                kind: EventKind::Failed(tid),
                tag: t.tag,
            });
        }
    }

    pub fn revive(&mut self, id: EndpointId) {
        self.endpoints[id].alive = true;
        self.record("revive", id, id, 0);
    }

    pub fn schedule_kill(&mut self, at: f64, id: EndpointId) {
        self.schedule(at, Pending::Kill(id));
    }

    pub fn schedule_revive(&mut self, at: f64, id: EndpointId) {
        self.schedule(at, Pending::Revive(id));
    }

    pub fn in_flight(&self) -> usize {
        self.transfers.len()
    }

    /// Advances to the next event and returns it; `None` once nothing is
    /// scheduled or in flight.
    pub fn next_event(&mut self) -> Option<SimEvent> {
        loop {
            if let Some(e) = self.ready.pop_front() {
                return Some(e);
            }
            self.update_rates();
            let mut t_next = f64::INFINITY;
            for t in self.transfers.values() {
                if t.phase == Phase::Streaming {
                    t_next = t_next.min(self.now + t.remaining / t.rate);
                }
            }
            if let Some(Reverse(s)) = self.heap.peek() {
                t_next = t_next.min(s.time);
            }
            if !t_next.is_finite() {
                return None;
            }
            self.advance_to(t_next);
            while let Some(Reverse(s)) = self.heap.peek().copied() {
                if s.time > self.now {
                    break;
                }
                self.heap.pop();
                self.fire(s.what);
            }
        }
    }

    /// Runs until nothing is left and returns the final time.
    pub fn run_until_idle(&mut self) -> f64 {
        while self.next_event().is_some() {}
        self.now
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Trace as CSV with columns `time,event,src,dst,bytes`; time in seconds.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("time,event,src,dst,bytes\n");
        for r in self.trace() {
            let _ = writeln!(
                out,
                "{:.9},{},{},{},{}",
                r.time, r.event, r.src, r.dst, r.bytes
            );
        }
        out
    }

    fn schedule(&mut self, time: f64, what: Pending) {
        self.seq += 1;
        self.heap.push(Reverse(Scheduled {
            time,
            seq: self.seq,
            what,
        }));
    }

    fn record(&mut self, event: &'static str, src: EndpointId, dst: EndpointId, bytes: u64) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                time: self.now,
                event,
                src: self.endpoints[src].name.clone(),
                dst: self.endpoints[dst].name.clone(),
                bytes,
            });
        }
    }

    fn update_rates(&mut self) {
        let mut load = vec![0u32; self.endpoints.len()];
        for t in self
            .transfers
            .values()
            .filter(|t| t.phase == Phase::Streaming)
        {
            load[t.src] += 1;
            load[t.dst] += 1;
        }
        let share = |e: EndpointId| self.endpoints[e].bytes_per_sec / load[e] as f64;
        let rates: Vec<(TransferId, f64)> = self
            .transfers
            .iter()
            .filter(|(_, t)| t.phase == Phase::Streaming)
            .map(|(id, t)| (*id, share(t.src).min(share(t.dst))))
            .collect();
        for (id, rate) in rates {
            self.transfers.get_mut(&id).expect("present").rate = rate;
        }
    }

    fn advance_to(&mut self, time: f64) {
        let dt = time - self.now;
        self.now = time;
        let mut done = Vec::new();
        for (id, t) in self.transfers.iter_mut() {
            if t.phase != Phase::Streaming {
                continue;
            }
            t.remaining -= t.rate * dt;
            if t.remaining <= 1e-6_f64.max(t.bytes as f64 * 1e-12) {
                done.push(*id);
            }
        }
        for id in done {
            self.deliver(id);
        }
    }

    fn deliver(&mut self, id: TransferId) {
        let t = self.transfers.remove(&id).expect("present");
        self.record("deliver", t.src, t.dst, t.bytes);
        self.ready.push_back(SimEvent {
            time: self.now,
            kind: EventKind::Delivered(id),
            tag: t.tag,
        });
    }

    fn fire(&mut self, what: Pending) {
        match what {
            Pending::RequestDone(id) => {
                let Some(t) = self.transfers.get_mut(&id) else {
                    return;
                };
                if t.bytes == 0 {
                    self.deliver(id);
                } else {
                    t.phase = Phase::Streaming;
                }
            }
            Pending::Timer(tag) => self.ready.push_back(SimEvent {
                time: self.now,
                kind: EventKind::Timer,
                tag,
            }),
            Pending::Kill(e) => self.kill(e),
            Pending::Revive(e) => self.revive(e),
        }
    }
}
