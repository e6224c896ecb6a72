//! The discrete-event engine.
//!
//! Events are ordered by `(timestamp, sequence)` where the sequence number
//! is the issue order, so a run is a pure function of its inputs. Each rank
//! is a resumable position in its skeleton stream. A rank runs until it
//! blocks on communication or starts computing; only events resume it.
//!
//! Point-to-point semantics: the k-th send from `s` to `r` matches the k-th
//! receive `r` posts from `s`. Both sides complete once the message has
//! been delivered and matched, so blocking sends behave as rendezvous.
//! Collectives expand into fragments on their own matching channels, keyed
//! by the collective's per-group sequence number, and block the caller
//! until its last phase completes.
//!
//! Reaching `END` waits for outstanding nonblocking operations before the
//! rank finishes.

pub mod collective;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::check::eval_f64;
use crate::metrics::{aggregate, AppMetrics, LogRecord, MetricsStore, RankMetrics};
use crate::network::{LinkId, Network, NodeId, Port, Route, RouteClass, RouterId, Routing};
use crate::rng::{stream, Stream};
use crate::skeleton::{Code, Cursor, GroupId, Marker, SkeletonOp, SkeletonProgram};
use collective::{binomial_bcast, recursive_doubling, Phase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("deadlock: {app} rank {rank} is {state} and no events remain")]
    Deadlock { app: String, rank: u32, state: String },
    #[error("placement conflict: {0}")]
    PlacementConflict(String),
    #[error("{app}: message from rank {src} to rank {dst} carries {sent} bytes but the receive expects {posted}")]
    MatchError { app: String, src: u32, dst: u32, sent: u64, posted: u64 },
}

/// One application instance: its skeleton and where its ranks live.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub program: SkeletonProgram,
    /// Node of each rank.
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub routing: Routing,
    pub seed: u64,
    pub end_time: Option<u64>,
    pub window_ns: u64,
    pub trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            routing: Routing::Min,
            seed: 0,
            end_time: None,
            window_ns: crate::metrics::DEFAULT_WINDOW_NS,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsStore,
    /// Hex sha256 over the event trace.
    pub trace_hash: String,
    /// `timestamp_ns,seq,kind,app,rank,detail` lines, when tracing.
    pub trace: Option<Vec<String>>,
    pub events: u64,
}

pub const TRACE_HEADER: &str = "timestamp_ns,seq,kind,app,rank,detail";

type HandleId = u32;
type MsgId = u32;
type PacketId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    /// Packet reaches a router after crossing a link.
    Router { pkt: PacketId, router: RouterId },
    /// Packet reaches its destination node.
    Node { pkt: PacketId },
    /// A rank becomes runnable.
    Resume { rank: u32 },
}

#[derive(Debug)]
struct Msg {
    app: u32,
    src: u32,
    dst: u32,
    bytes: u64,
    injected: u64,
    packets_left: u32,
    delivered: bool,
    send: HandleId,
    recv: Option<HandleId>,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    msg: MsgId,
    bytes: u64,
    dst_node: NodeId,
    route: Route,
    decided: bool,
    hops: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ChanKey {
    P2p { app: u32, src: u32, dst: u32 },
    Coll { app: u32, group: GroupId, seq: u64, src: u32, dst: u32 },
}

#[derive(Debug, Default)]
struct Chan {
    sends: VecDeque<MsgId>,
    recvs: VecDeque<(HandleId, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wait {
    /// Runnable or running.
    Ready,
    /// A resume event is pending.
    Scheduled,
    Handle(HandleId),
    All,
    Collective,
    Compute,
    Finishing,
    Done,
}

#[derive(Debug)]
struct CollRun {
    group: GroupId,
    seq: u64,
    bytes: u64,
    phases: Vec<Phase>,
    next: usize,
    pending: Vec<HandleId>,
}

#[derive(Debug)]
struct RankCtx {
    app: u32,
    rank: u32,
    node: NodeId,
    code: Code,
    cursor: Cursor,
    wait: Wait,
    blocked_since: Option<u64>,
    outstanding: Vec<HandleId>,
    coll_seq: HashMap<GroupId, u64>,
    coll: Option<CollRun>,
    reset_at: u64,
    /// (log id, item index) -> values logged since the last aggregation.
    logged: BTreeMap<(u32, usize), Vec<f64>>,
}

struct Engine<'a> {
    jobs: &'a [Job],
    net: &'a mut Network,
    cfg: EngineConfig,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<(u64, u64, Ev)>>,
    seq: u64,
    now: u64,
    cur_seq: u64,
    ranks: Vec<RankCtx>,
    /// First global rank index of each job.
    offsets: Vec<u32>,
    msgs: Vec<Msg>,
    handles: Vec<(u32, bool)>,
    packets: Vec<Packet>,
    free_packets: Vec<PacketId>,
    chans: HashMap<ChanKey, Chan>,
    metrics: MetricsStore,
    hasher: Sha256,
    trace: Option<Vec<String>>,
    events: u64,
}

/// Runs `jobs` on `net` until every rank finishes or the end time passes.
/// Link counters in `net` are reset first and hold the run's loads after.
pub fn run(jobs: &[Job], net: &mut Network, cfg: EngineConfig) -> Result<RunOutput, EngineError> {
    net.reset();
    let mut owner: HashMap<NodeId, (usize, usize)> = HashMap::new();
    for (j, job) in jobs.iter().enumerate() {
        if job.nodes.len() != job.program.num_tasks() as usize {
            return Err(EngineError::PlacementConflict(format!(
                "{} has {} ranks but {} nodes",
                job.label,
                job.program.num_tasks(),
                job.nodes.len()
            )));
        }
        for (r, &n) in job.nodes.iter().enumerate() {
            if n >= net.num_nodes() {
                return Err(EngineError::PlacementConflict(format!(
                    "{} rank {r} mapped to node {n}, but the network has {} nodes",
                    job.label,
                    net.num_nodes()
                )));
            }
            if let Some((oj, or)) = owner.insert(n, (j, r)) {
                return Err(EngineError::PlacementConflict(format!(
                    "node {n} holds {} rank {or} and {} rank {r}",
                    jobs[oj].label, job.label
                )));
            }
        }
    }

    let apps = jobs
        .iter()
        .map(|j| AppMetrics {
            label: j.label.clone(),
            ranks: j.nodes.iter().map(|&node| RankMetrics { node, ..Default::default() }).collect(),
            routers: j.nodes.iter().map(|&n| net.router_of(n)).collect(),
            ..Default::default()
        })
        .collect();
    let mut ranks = Vec::new();
    let mut offsets = Vec::new();
    for (a, job) in jobs.iter().enumerate() {
        offsets.push(ranks.len() as u32);
        for (r, &node) in job.nodes.iter().enumerate() {
            ranks.push(RankCtx {
                app: a as u32,
                rank: r as u32,
                node,
                code: job.program.code(r as u32),
                cursor: Cursor::default(),
                wait: Wait::Scheduled,
                blocked_since: None,
                outstanding: Vec::new(),
                coll_seq: HashMap::new(),
                coll: None,
                reset_at: 0,
                logged: BTreeMap::new(),
            });
        }
    }
    let mut e = Engine {
        jobs,
        net,
        cfg,
        rng: stream(cfg.seed, Stream::Routing),
        heap: BinaryHeap::new(),
        seq: 0,
        now: 0,
        cur_seq: 0,
        ranks,
        offsets,
        msgs: Vec::new(),
        handles: Vec::new(),
        packets: Vec::new(),
        free_packets: Vec::new(),
        chans: HashMap::new(),
        metrics: MetricsStore::new(cfg.window_ns, apps),
        hasher: Sha256::new(),
        trace: cfg.trace.then(Vec::new),
        events: 0,
    };
    for g in 0..e.ranks.len() as u32 {
        e.schedule(0, Ev::Resume { rank: g });
    }
    e.main_loop()?;
    let end = match cfg.end_time {
        Some(t) if e.ranks.iter().any(|r| r.wait != Wait::Done) => t,
        _ => e.now,
    };
    for g in 0..e.ranks.len() {
        if e.ranks[g].wait != Wait::Done {
            let (a, r) = (e.ranks[g].app as usize, e.ranks[g].rank as usize);
            let m = &mut e.metrics.apps[a].ranks[r];
            m.total_ns = end;
            if let Some(since) = e.ranks[g].blocked_since {
                m.comm_ns += end - since;
            }
        }
    }
    e.metrics.end_time = end;
    e.metrics.link_load = e.net.bytes_by_class().to_vec();
    let hash = e.hasher.finalize().iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    });
    Ok(RunOutput { metrics: e.metrics, trace_hash: hash, trace: e.trace, events: e.events })
}

#[derive(Debug, Clone, Copy)]
enum TraceKind {
    Inject,
    Arrive,
    Deliver,
    Block,
    Unblock,
    Compute,
    Finish,
}

impl TraceKind {
    fn name(self) -> &'static str {
        match self {
            TraceKind::Inject => "inject",
            TraceKind::Arrive => "arrive",
            TraceKind::Deliver => "deliver",
            TraceKind::Block => "block",
            TraceKind::Unblock => "unblock",
            TraceKind::Compute => "compute",
            TraceKind::Finish => "finish",
        }
    }
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, t: u64, ev: Ev) {
        self.heap.push(Reverse((t, self.seq, ev)));
        self.seq += 1;
    }

    fn record(&mut self, kind: TraceKind, g: u32, a: u64, b: u64) {
        let ctx = &self.ranks[g as usize];
        let (app, rank) = (ctx.app, ctx.rank);
        let h = &mut self.hasher;
        h.update(self.now.to_le_bytes());
        h.update(self.cur_seq.to_le_bytes());
        h.update([kind as u8]);
        h.update(app.to_le_bytes());
        h.update(rank.to_le_bytes());
        h.update(a.to_le_bytes());
        h.update(b.to_le_bytes());
        if let Some(lines) = &mut self.trace {
            let detail = match kind {
                TraceKind::Inject => format!("msg={a} bytes={b}"),
                TraceKind::Arrive => format!("router={a} msg={b}"),
                TraceKind::Deliver => format!("msg={a} latency={b}"),
                TraceKind::Block => ["send", "recv", "waitall", "collective", "finalize"][a as usize].to_string(),
                TraceKind::Unblock => format!("{a}"),
                TraceKind::Compute => format!("{a}"),
                TraceKind::Finish => String::new(),
            };
            lines.push(format!("{},{},{},{},{},{}", self.now, self.cur_seq, kind.name(), self.jobs[app as usize].label, rank, detail));
        }
    }

    fn main_loop(&mut self) -> Result<(), EngineError> {
        while let Some(&Reverse((t, seq, ev))) = self.heap.peek() {
            if self.cfg.end_time.is_some_and(|end| t > end) {
                return Ok(());
            }
            self.heap.pop();
            debug_assert!(t >= self.now, "clock went backwards");
            self.now = t;
            self.cur_seq = seq;
            self.events += 1;
            match ev {
                Ev::Resume { rank } => self.resume(rank)?,
                Ev::Router { pkt, router } => self.at_router(pkt, router),
                Ev::Node { pkt } => self.at_node(pkt),
            }
        }
        if let Some(ctx) = self.ranks.iter().find(|r| r.wait != Wait::Done) {
            let state = match ctx.wait {
                Wait::Handle(h) => {
                    let pending = self.msgs.iter().any(|m| m.send == h);
                    if pending { "blocked in a send" } else { "blocked in a receive" }
                }
                Wait::All => "blocked in WAITALL",
                Wait::Collective => "blocked in a collective",
                Wait::Finishing => "finishing with unmatched nonblocking operations",
                _ => "runnable",
            };
            return Err(EngineError::Deadlock {
                app: self.jobs[ctx.app as usize].label.clone(),
                rank: ctx.rank,
                state: state.into(),
            });
        }
        Ok(())
    }

    // ---- packets -------------------------------------------------------

    fn inject(&mut self, g: u32, dst_rank: u32, bytes: u64, send: HandleId) -> MsgId {
        let ctx = &self.ranks[g as usize];
        let app = ctx.app;
        let src_node = ctx.node;
        let dst_node = self.jobs[app as usize].nodes[dst_rank as usize];
        let psize = self.net.config().packet_size;
        let count = bytes.div_ceil(psize) as u32;
        let id = self.msgs.len() as MsgId;
        self.msgs.push(Msg {
            app,
            src: ctx.rank,
            dst: dst_rank,
            bytes,
            injected: self.now,
            packets_left: count,
            delivered: false,
            send,
            recv: None,
        });
        let totals = &mut self.metrics.apps[app as usize].totals;
        totals.messages_injected += 1;
        totals.packets_injected += count as u64;
        self.record(TraceKind::Inject, g, id as u64, bytes);
        let link = self.net.inject_link(src_node);
        let router = self.net.router_of(src_node);
        let latency = self.net.config().link_latency_ns;
        for i in 0..count {
            let size = if i + 1 == count { bytes - psize * (count as u64 - 1) } else { psize };
            let pkt = Packet {
                msg: id,
                bytes: size,
                dst_node,
                route: Route::minimal(self.net.router_of(dst_node)),
                decided: false,
                hops: 0,
            };
            let pid = match self.free_packets.pop() {
                Some(p) => {
                    self.packets[p as usize] = pkt;
                    p
                }
                None => {
                    self.packets.push(pkt);
                    (self.packets.len() - 1) as PacketId
                }
            };
            let finish = self.net.transmit(link, self.now, size);
            self.schedule(finish + latency, Ev::Router { pkt: pid, router });
        }
        id
    }

    fn at_router(&mut self, pid: PacketId, router: RouterId) {
        let now = self.now;
        let mut pkt = self.packets[pid as usize];
        let app = self.msgs[pkt.msg as usize].app;
        self.metrics.record_router_packet(router, app, now, pkt.bytes);
        let sender = self.offsets[app as usize] + self.msgs[pkt.msg as usize].src;
        self.record(TraceKind::Arrive, sender, router as u64, pkt.msg as u64);
        let next = if !pkt.decided {
            pkt.decided = true;
            match self.cfg.routing {
                Routing::Adaptive => {
                    let (route, first) = self.net.adaptive_route(router, pkt.route.dst, now, &mut self.rng);
                    pkt.route = route;
                    first
                }
                Routing::Min => self.net.next_link(&mut pkt.route, router, &mut self.rng),
            }
        } else {
            self.net.next_link(&mut pkt.route, router, &mut self.rng)
        };
        let c = self.net.config();
        let (delay, latency) = (c.router_delay_ns, c.link_latency_ns);
        match next {
            Some(link) => {
                pkt.hops += 1;
                let finish = self.net.transmit(link, now + delay, pkt.bytes);
                let Port::Router(to) = self.net.link(link).to else { unreachable!() };
                self.packets[pid as usize] = pkt;
                self.schedule(finish + latency, Ev::Router { pkt: pid, router: to });
            }
            None => {
                let link: LinkId = self.net.eject_link(pkt.dst_node);
                let finish = self.net.transmit(link, now + delay, pkt.bytes);
                self.packets[pid as usize] = pkt;
                self.schedule(finish + latency, Ev::Node { pkt: pid });
            }
        }
    }

    fn at_node(&mut self, pid: PacketId) {
        let pkt = self.packets[pid as usize];
        self.free_packets.push(pid);
        let m = &mut self.msgs[pkt.msg as usize];
        let totals = &mut self.metrics.apps[m.app as usize].totals;
        totals.packets_delivered += 1;
        match pkt.route.class {
            RouteClass::Minimal => totals.max_hops_minimal = totals.max_hops_minimal.max(pkt.hops),
            RouteClass::Nonminimal => {
                totals.max_hops_nonminimal = totals.max_hops_nonminimal.max(pkt.hops);
                totals.nonminimal_packets += 1;
            }
        }
        m.packets_left -= 1;
        if m.packets_left > 0 {
            return;
        }
        m.delivered = true;
        totals.messages_delivered += 1;
        let (app, dst, latency) = (m.app, m.dst, self.now - m.injected);
        self.metrics.record_delivery(app, dst, latency);
        let receiver = self.offsets[app as usize] + dst;
        self.record(TraceKind::Deliver, receiver, pkt.msg as u64, latency);
        let m = &self.msgs[pkt.msg as usize];
        if let Some(r) = m.recv {
            let s = m.send;
            self.pair_complete(app, s, r);
        }
    }

    // ---- matching ------------------------------------------------------

    fn pair_complete(&mut self, app: u32, send: HandleId, recv: HandleId) {
        self.metrics.apps[app as usize].totals.messages_consumed += 1;
        self.complete(send);
        self.complete(recv);
    }

    fn complete(&mut self, h: HandleId) {
        self.handles[h as usize].1 = true;
        let g = self.handles[h as usize].0;
        let ctx = &self.ranks[g as usize];
        let wake = match ctx.wait {
            Wait::Handle(x) => x == h,
            Wait::All | Wait::Finishing => ctx.outstanding.iter().all(|&x| self.handles[x as usize].1),
            Wait::Collective => {
                ctx.coll.as_ref().is_some_and(|c| c.pending.iter().all(|&x| self.handles[x as usize].1))
            }
            _ => false,
        };
        if wake {
            self.ranks[g as usize].wait = Wait::Scheduled;
            self.schedule(self.now, Ev::Resume { rank: g });
        }
    }

    fn new_handle(&mut self, g: u32) -> HandleId {
        self.handles.push((g, false));
        (self.handles.len() - 1) as HandleId
    }

    fn post_send(&mut self, g: u32, key: ChanKey, dst: u32, bytes: u64) -> Result<HandleId, EngineError> {
        let h = self.new_handle(g);
        let id = self.inject(g, dst, bytes, h);
        let chan = self.chans.entry(key).or_default();
        if let Some((rh, posted)) = chan.recvs.pop_front() {
            if chan.sends.is_empty() && chan.recvs.is_empty() {
                self.chans.remove(&key);
            }
            self.check_size(g, dst, bytes, posted)?;
            self.msgs[id as usize].recv = Some(rh);
        } else {
            chan.sends.push_back(id);
        }
        Ok(h)
    }

    fn post_recv(&mut self, g: u32, key: ChanKey, src: u32, bytes: u64) -> Result<HandleId, EngineError> {
        let h = self.new_handle(g);
        let chan = self.chans.entry(key).or_default();
        if let Some(id) = chan.sends.pop_front() {
            if chan.sends.is_empty() && chan.recvs.is_empty() {
                self.chans.remove(&key);
            }
            let m = &mut self.msgs[id as usize];
            let (sent, app, send, delivered) = (m.bytes, m.app, m.send, m.delivered);
            m.recv = Some(h);
            let me = self.ranks[g as usize].rank;
            if sent != bytes {
                return Err(EngineError::MatchError {
                    app: self.jobs[app as usize].label.clone(),
                    src,
                    dst: me,
                    sent,
                    posted: bytes,
                });
            }
            if delivered {
                self.pair_complete(app, send, h);
            }
        } else {
            chan.recvs.push_back((h, bytes));
        }
        Ok(h)
    }

    fn check_size(&self, g: u32, dst: u32, sent: u64, posted: u64) -> Result<(), EngineError> {
        if sent == posted {
            return Ok(());
        }
        let ctx = &self.ranks[g as usize];
        Err(EngineError::MatchError {
            app: self.jobs[ctx.app as usize].label.clone(),
            src: ctx.rank,
            dst,
            sent,
            posted,
        })
    }

    // ---- ranks ---------------------------------------------------------

    fn block(&mut self, g: u32, wait: Wait, why: u64) {
        let ctx = &mut self.ranks[g as usize];
        ctx.wait = wait;
        ctx.blocked_since = Some(self.now);
        self.record(TraceKind::Block, g, why, 0);
    }

    fn resume(&mut self, g: u32) -> Result<(), EngineError> {
        let now = self.now;
        let ctx = &mut self.ranks[g as usize];
        ctx.wait = Wait::Ready;
        if ctx.coll.is_some() {
            return self.step(g);
        }
        if let Some(since) = ctx.blocked_since.take() {
            let (a, r) = (ctx.app as usize, ctx.rank as usize);
            self.metrics.apps[a].ranks[r].comm_ns += now - since;
            self.record(TraceKind::Unblock, g, now - since, 0);
        }
        self.step(g)
    }

    /// Runs rank `g` until it blocks, computes or finishes.
    fn step(&mut self, g: u32) -> Result<(), EngineError> {
        loop {
            if self.ranks[g as usize].coll.is_some() {
                if !self.advance_collective(g)? {
                    return Ok(());
                }
                continue;
            }
            let ctx = &mut self.ranks[g as usize];
            let op = ctx.cursor.next(&ctx.code).cloned();
            let op = op.unwrap_or(SkeletonOp::End);
            let (app, rank) = (ctx.app, ctx.rank);
            match op {
                SkeletonOp::Send { dst, bytes, blocking } => {
                    let h = self.post_send(g, ChanKey::P2p { app, src: rank, dst }, dst, bytes)?;
                    if blocking {
                        if !self.handles[h as usize].1 {
                            self.block(g, Wait::Handle(h), 0);
                            return Ok(());
                        }
                    } else {
                        self.ranks[g as usize].outstanding.push(h);
                    }
                }
                SkeletonOp::Recv { src, bytes, blocking } => {
                    let h = self.post_recv(g, ChanKey::P2p { app, src, dst: rank }, src, bytes)?;
                    if blocking {
                        if !self.handles[h as usize].1 {
                            self.block(g, Wait::Handle(h), 1);
                            return Ok(());
                        }
                    } else {
                        self.ranks[g as usize].outstanding.push(h);
                    }
                }
                SkeletonOp::WaitAll => {
                    if self.all_outstanding_done(g) {
                        self.ranks[g as usize].outstanding.clear();
                    } else {
                        self.block(g, Wait::All, 2);
                        return Ok(());
                    }
                }
                SkeletonOp::AllReduce { group, bytes } | SkeletonOp::Bcast { group, bytes, .. } => {
                    self.enter_collective(g, &op, group, bytes);
                }
                SkeletonOp::Barrier { group } => self.enter_collective(g, &op, group, 1),
                SkeletonOp::Compute { ns } => {
                    if ns > 0 {
                        self.record(TraceKind::Compute, g, ns, 0);
                        self.ranks[g as usize].wait = Wait::Compute;
                        self.schedule(self.now + ns, Ev::Resume { rank: g });
                        return Ok(());
                    }
                }
                SkeletonOp::Marker(m) => self.marker(g, m),
                SkeletonOp::End => {
                    if !self.all_outstanding_done(g) {
                        self.block(g, Wait::Finishing, 4);
                        return Ok(());
                    }
                    self.finish(g);
                    return Ok(());
                }
                SkeletonOp::Loop { .. } => unreachable!("loops are flattened"),
            }
        }
    }

    fn all_outstanding_done(&self, g: u32) -> bool {
        self.ranks[g as usize].outstanding.iter().all(|&h| self.handles[h as usize].1)
    }

    fn finish(&mut self, g: u32) {
        let now = self.now;
        let ctx = &mut self.ranks[g as usize];
        ctx.wait = Wait::Done;
        ctx.outstanding.clear();
        let (a, r) = (ctx.app as usize, ctx.rank);
        let pending = std::mem::take(&mut ctx.logged);
        self.flush_logs(a, r, pending);
        self.metrics.apps[a].ranks[r as usize].total_ns = now;
        self.record(TraceKind::Finish, g, 0, 0);
    }

    fn enter_collective(&mut self, g: u32, op: &SkeletonOp, group: GroupId, bytes: u64) {
        let ctx = &mut self.ranks[g as usize];
        let program = &self.jobs[ctx.app as usize].program;
        let members = program.group(group);
        let me = members.binary_search(&ctx.rank).expect("rank is a member");
        let phases = match *op {
            SkeletonOp::Bcast { root, .. } => {
                binomial_bcast(me, members.len(), members.binary_search(&root).expect("root is a member"))
            }
            _ => recursive_doubling(me, members.len()),
        };
        let seq = ctx.coll_seq.entry(group).or_insert(0);
        let s = *seq;
        *seq += 1;
        ctx.coll = Some(CollRun { group, seq: s, bytes, phases, next: 0, pending: Vec::new() });
        ctx.blocked_since = Some(self.now);
        ctx.wait = Wait::Ready;
        self.record(TraceKind::Block, g, 3, 0);
    }

    /// Posts the next phase of the running collective once the current one
    /// is complete. Returns false if the rank must wait.
    fn advance_collective(&mut self, g: u32) -> Result<bool, EngineError> {
        loop {
            let ctx = &mut self.ranks[g as usize];
            let coll = ctx.coll.as_mut().unwrap();
            if !coll.pending.iter().all(|&h| self.handles[h as usize].1) {
                ctx.wait = Wait::Collective;
                return Ok(false);
            }
            coll.pending.clear();
            if coll.next == coll.phases.len() {
                ctx.coll = None;
                if let Some(since) = ctx.blocked_since.take() {
                    let (a, r) = (ctx.app as usize, ctx.rank as usize);
                    self.metrics.apps[a].ranks[r].comm_ns += self.now - since;
                    self.record(TraceKind::Unblock, g, self.now - since, 0);
                }
                return Ok(true);
            }
            let phase = coll.phases[coll.next].clone();
            coll.next += 1;
            let (group, seq, bytes) = (coll.group, coll.seq, coll.bytes);
            let (app, rank) = (ctx.app, ctx.rank);
            let members = self.jobs[app as usize].program.group(group);
            let peers_r: Vec<u32> = phase.recv_from.iter().map(|&i| members[i]).collect();
            let peers_s: Vec<u32> = phase.send_to.iter().map(|&i| members[i]).collect();
            let mut pending = Vec::new();
            for src in peers_r {
                pending.push(self.post_recv(g, ChanKey::Coll { app, group, seq, src, dst: rank }, src, bytes)?);
            }
            for dst in peers_s {
                pending.push(self.post_send(g, ChanKey::Coll { app, group, seq, src: rank, dst }, dst, bytes)?);
            }
            self.ranks[g as usize].coll.as_mut().unwrap().pending = pending;
        }
    }

    fn marker(&mut self, g: u32, m: Marker) {
        let now = self.now;
        let ctx = &mut self.ranks[g as usize];
        match m {
            Marker::Reset => ctx.reset_at = now,
            Marker::Log(id) => {
                let program = &self.jobs[ctx.app as usize].program;
                let spec = program.log(id);
                let env = program.env().bind(spec.var.as_deref(), ctx.rank as i64);
                let elapsed = (now - ctx.reset_at) as f64 / 1000.0;
                for (i, item) in spec.items.iter().enumerate() {
                    let v = eval_f64(&item.expr, &env, elapsed).unwrap_or(f64::NAN);
                    ctx.logged.entry((id, i)).or_default().push(v);
                }
            }
            Marker::Aggregate => {
                let (a, r) = (ctx.app as usize, ctx.rank);
                let pending = std::mem::take(&mut ctx.logged);
                self.flush_logs(a, r, pending);
            }
        }
    }

    fn flush_logs(&mut self, app: usize, rank: u32, pending: BTreeMap<(u32, usize), Vec<f64>>) {
        let program = &self.jobs[app].program;
        for ((id, i), values) in pending {
            let item = &program.log(id).items[i];
            let name = item.aggregate.map_or("none", |a| a.name());
            self.metrics.apps[app].logs.push(LogRecord {
                rank,
                label: item.label.clone(),
                aggregate: name,
                value: aggregate(name, &values),
            });
        }
    }
}
