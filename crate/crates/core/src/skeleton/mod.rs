//! Skeletons: validated programs lowered to per-rank operation streams.
//!
//! A skeleton keeps only what the network sees. Payloads are gone (sizes
//! remain), compute statements become delays, and log statements become
//! markers. Every point-to-point send is paired with a receive in the
//! destination's stream.
//!
//! Lowering of one send statement for rank `r`:
//!
//! * receives are emitted before sends, incoming messages ordered by
//!   source rank and then by the source's send order;
//! * in a blocking statement a rank that only sends (or only receives)
//!   gets blocking operations; a rank that does both gets nonblocking
//!   receives, blocking sends and a trailing `WAITALL`, so exchanges
//!   cannot deadlock under rendezvous sends;
//! * in an asynchronous statement everything is nonblocking.

pub mod audit;
pub mod reference;
pub mod registry;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::dsl::ast::{LogItem, SendMode, Stmt, StmtKind, Target, TaskSet};
use crate::dsl::check::{self, duration_ns, eval, eval_at_least, members, size_bytes, static_targets, Binding, Env};
use crate::dsl::{DslError, ValidatedProgram};
use crate::rng;

pub use audit::{audit, AuditError, AuditReport, EventCounts};
pub use registry::{RegistryError, SkeletonRegistry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkeletonError {
    #[error(transparent)]
    Dsl(#[from] DslError),
}

/// Index into [`SkeletonProgram::groups`].
pub type GroupId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    Reset,
    /// Index into [`SkeletonProgram::logs`].
    Log(u32),
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkeletonOp {
    Send { dst: u32, bytes: u64, blocking: bool },
    Recv { src: u32, bytes: u64, blocking: bool },
    WaitAll,
    AllReduce { group: GroupId, bytes: u64 },
    Bcast { root: u32, group: GroupId, bytes: u64 },
    Barrier { group: GroupId },
    Compute { ns: u64 },
    Marker(Marker),
    Loop { count: u64, body: Vec<SkeletonOp> },
    End,
}

/// A log statement as seen by one rank's marker.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpec {
    pub var: Option<String>,
    pub items: Vec<LogItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Members {
    All,
    /// Sorted.
    Some(Vec<u32>),
}

impl Members {
    fn from_list(list: Vec<u32>, n: u32) -> Members {
        if list.len() == n as usize { Members::All } else { Members::Some(list) }
    }

    fn contains(&self, r: u32) -> bool {
        match self {
            Members::All => true,
            Members::Some(v) => v.binary_search(&r).is_ok(),
        }
    }
}

/// Per-rank lists in compressed sparse row form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Csr {
    offsets: Vec<u32>,
    items: Vec<(u32, u64)>,
}

impl Csr {
    fn from_lists(lists: Vec<Vec<(u32, u64)>>) -> Csr {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut items = Vec::new();
        offsets.push(0);
        for l in lists {
            items.extend(l);
            offsets.push(items.len() as u32);
        }
        Csr { offsets, items }
    }

    fn row(&self, r: u32) -> &[(u32, u64)] {
        let r = r as usize;
        &self.items[self.offsets[r] as usize..self.offsets[r + 1] as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum P2p {
    Static { outgoing: Csr, incoming: Csr },
    /// Peers redrawn on every execution; one CSR pair per occurrence.
    Random { occurrences: Vec<(Csr, Csr)> },
}

#[derive(Debug, Clone, PartialEq)]
enum Plan {
    Loop { count: u64, body: Vec<Plan>, unroll: bool },
    P2p { mode: SendMode, routes: P2p },
    AllReduce { group: GroupId, bytes: u64 },
    Bcast { root: u32, group: GroupId, bytes: u64 },
    Barrier { group: GroupId },
    Compute { ns: Vec<Option<u64>> },
    WaitAll { members: Members },
    Marker { marker: Marker, members: Members },
    Raw(Vec<Vec<SkeletonOp>>),
}

/// A compiled skeleton: immutable, cheap to clone, safe to share.
#[derive(Debug, Clone)]
pub struct SkeletonProgram {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    name: String,
    binding: Binding,
    num_tasks: u32,
    groups: Vec<Vec<u32>>,
    logs: Vec<LogSpec>,
    plan: Vec<Plan>,
}

impl SkeletonProgram {
    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn binding(&self) -> &Binding {
        &self.inner.binding
    }

    pub fn num_tasks(&self) -> u32 {
        self.inner.num_tasks
    }

    /// Participants of a collective group, ascending.
    pub fn group(&self, id: GroupId) -> &[u32] {
        &self.inner.groups[id as usize]
    }

    pub fn log(&self, id: u32) -> &LogSpec {
        &self.inner.logs[id as usize]
    }

    /// Evaluation environment for rank-local expressions (logs).
    pub fn env(&self) -> Env<'_> {
        Env { params: &self.inner.binding, num_tasks: self.inner.num_tasks as i64, local: None }
    }

    /// The operation stream of `rank`, loops kept as [`SkeletonOp::Loop`].
    /// Loops around statements with randomly drawn peers are unrolled.
    pub fn stream(&self, rank: u32) -> Vec<SkeletonOp> {
        assert!(rank < self.inner.num_tasks, "rank {rank} out of range");
        let mut occ = HashMap::new();
        let mut out = Vec::new();
        self.lower(&self.inner.plan, rank, &mut occ, &mut out);
        out.push(SkeletonOp::End);
        out
    }

    /// The stream of `rank` compiled for execution.
    pub fn code(&self, rank: u32) -> Code {
        Code::compile(&self.stream(rank))
    }

    fn lower(
        &self,
        plan: &[Plan],
        rank: u32,
        occ: &mut HashMap<*const Plan, usize>,
        out: &mut Vec<SkeletonOp>,
    ) {
        for node in plan {
            match node {
                Plan::Loop { count, body, unroll: false } => {
                    let mut inner = Vec::new();
                    self.lower(body, rank, occ, &mut inner);
                    if !inner.is_empty() && *count > 0 {
                        out.push(SkeletonOp::Loop { count: *count, body: inner });
                    }
                }
                Plan::Loop { count, body, unroll: true } => {
                    for _ in 0..*count {
                        self.lower(body, rank, occ, out);
                    }
                }
                Plan::P2p { mode, routes } => {
                    let (outgoing, incoming) = match routes {
                        P2p::Static { outgoing, incoming } => (outgoing.row(rank), incoming.row(rank)),
                        P2p::Random { occurrences } => {
                            let k = occ.entry(node as *const Plan).or_insert(0);
                            let (o, i) = &occurrences[*k];
                            *k += 1;
                            (o.row(rank), i.row(rank))
                        }
                    };
                    lower_p2p(*mode, outgoing, incoming, out);
                }
                Plan::AllReduce { group, bytes } => {
                    if self.in_group(*group, rank) {
                        out.push(SkeletonOp::AllReduce { group: *group, bytes: *bytes });
                    }
                }
                Plan::Bcast { root, group, bytes } => {
                    if self.in_group(*group, rank) {
                        out.push(SkeletonOp::Bcast { root: *root, group: *group, bytes: *bytes });
                    }
                }
                Plan::Barrier { group } => {
                    if self.in_group(*group, rank) {
                        out.push(SkeletonOp::Barrier { group: *group });
                    }
                }
                Plan::Compute { ns } => {
                    if let Some(ns) = ns[rank as usize] {
                        out.push(SkeletonOp::Compute { ns });
                    }
                }
                Plan::WaitAll { members } => {
                    if members.contains(rank) {
                        out.push(SkeletonOp::WaitAll);
                    }
                }
                Plan::Marker { marker, members } => {
                    if members.contains(rank) {
                        out.push(SkeletonOp::Marker(*marker));
                    }
                }
                Plan::Raw(streams) => out.extend(streams[rank as usize].iter().cloned()),
            }
        }
    }

    /// A skeleton from hand-written streams, one per rank, without the
    /// trailing `END`. Used for engine and audit tests.
    pub fn from_streams(name: &str, groups: Vec<Vec<u32>>, streams: Vec<Vec<SkeletonOp>>) -> SkeletonProgram {
        SkeletonProgram {
            inner: Arc::new(Inner {
                name: name.to_string(),
                binding: Binding::new(),
                num_tasks: streams.len() as u32,
                groups,
                logs: Vec::new(),
                plan: vec![Plan::Raw(streams)],
            }),
        }
    }

    fn in_group(&self, group: GroupId, rank: u32) -> bool {
        self.group(group).binary_search(&rank).is_ok()
    }
}

fn lower_p2p(mode: SendMode, outgoing: &[(u32, u64)], incoming: &[(u32, u64)], out: &mut Vec<SkeletonOp>) {
    let (recv_blocking, send_blocking, wait) = match mode {
        SendMode::Nonblocking => (false, false, false),
        SendMode::Blocking if !outgoing.is_empty() && !incoming.is_empty() => (false, true, true),
        SendMode::Blocking => (true, true, false),
    };
    for &(src, bytes) in incoming {
        out.push(SkeletonOp::Recv { src, bytes, blocking: recv_blocking });
    }
    for &(dst, bytes) in outgoing {
        out.push(SkeletonOp::Send { dst, bytes, blocking: send_blocking });
    }
    if wait {
        out.push(SkeletonOp::WaitAll);
    }
}

/// Identifies a statement for random draws: stable for a given source.
pub(crate) fn site_id(stmt: &Stmt) -> u64 {
    ((stmt.loc.line as u64) << 32) | stmt.loc.col as u64
}

/// Lowers a validated program into a skeleton named `name`.
pub fn skeletonize(name: &str, program: &ValidatedProgram) -> Result<SkeletonProgram, SkeletonError> {
    let mut b = Builder {
        program,
        groups: Vec::new(),
        group_index: HashMap::new(),
        logs: Vec::new(),
    };
    let plan = b.block(&program.program.body, 1)?;
    Ok(SkeletonProgram {
        inner: Arc::new(Inner {
            name: name.to_string(),
            binding: program.binding.clone(),
            num_tasks: program.num_tasks,
            groups: b.groups,
            logs: b.logs,
            plan,
        }),
    })
}

struct Builder<'a> {
    program: &'a ValidatedProgram,
    groups: Vec<Vec<u32>>,
    group_index: HashMap<Vec<u32>, GroupId>,
    logs: Vec<LogSpec>,
}

impl<'a> Builder<'a> {
    fn env(&self) -> Env<'a> {
        self.program.env()
    }

    fn n(&self) -> u32 {
        self.program.num_tasks
    }

    fn group(&mut self, list: Vec<u32>) -> GroupId {
        if let Some(&id) = self.group_index.get(&list) {
            return id;
        }
        let id = self.groups.len() as GroupId;
        self.groups.push(list.clone());
        self.group_index.insert(list, id);
        id
    }

    fn members(&self, set: &TaskSet) -> Result<Members, DslError> {
        Ok(Members::from_list(members(set, &self.env())?, self.n()))
    }

    /// `executions` is how many times statements in this block run.
    fn block(&mut self, stmts: &'a [Stmt], executions: u64) -> Result<Vec<Plan>, DslError> {
        stmts.iter().map(|s| self.stmt(s, executions)).collect()
    }

    fn stmt(&mut self, s: &'a Stmt, executions: u64) -> Result<Plan, DslError> {
        let env = self.env();
        Ok(match &s.kind {
            StmtKind::Repeat { count, body } => {
                let count = eval_at_least(count, &env, 0, "repetition count")? as u64;
                let body = self.block(body, executions.saturating_mul(count))?;
                let unroll = contains_random(&body);
                Plan::Loop { count, body, unroll }
            }
            StmtKind::Send { senders, count, size, target, mode } => {
                let senders_list = members(senders, &env)?;
                let mut routes = Vec::with_capacity(senders_list.len());
                for &s_rank in &senders_list {
                    let env = env.bind(senders.var(), s_rank as i64);
                    let count = eval_at_least(count, &env, 0, "message count")? as usize;
                    let bytes = size_bytes(size, &env)?;
                    let peers = match static_targets(target, &env, s_rank)? {
                        Some(t) => Peers::Fixed(t),
                        None => {
                            let Target::RandomOther(other) = target else { unreachable!() };
                            Peers::RandomOther(eval(other, &env)? as u32)
                        }
                    };
                    routes.push((s_rank, count, bytes, peers));
                }
                let routes = if routes.iter().any(|r| matches!(r.3, Peers::RandomOther(_))) {
                    let site = site_id(s);
                    let occurrences = (0..executions)
                        .map(|k| self.route_csr(&routes, |sender, other| {
                            rng::random_other(self.program.seed, site, sender, k, self.n(), other)
                        }))
                        .collect();
                    P2p::Random { occurrences }
                } else {
                    let (outgoing, incoming) = self.route_csr(&routes, |_, _| unreachable!());
                    P2p::Static { outgoing, incoming }
                };
                Plan::P2p { mode: *mode, routes }
            }
            StmtKind::Reduce { tasks, size, .. } => {
                let group = self.group(members(tasks, &env)?);
                Plan::AllReduce { group, bytes: size_bytes(size, &env)? }
            }
            StmtKind::Broadcast { root, tasks, size } => {
                let group = self.group(members(tasks, &env)?);
                let root = eval(root, &env)? as u32;
                Plan::Bcast { root, group, bytes: size_bytes(size, &env)? }
            }
            StmtKind::Synchronize { tasks } => Plan::Barrier { group: self.group(members(tasks, &env)?) },
            StmtKind::Compute { tasks, duration } => {
                let mut ns = vec![None; self.n() as usize];
                for m in members(tasks, &env)? {
                    let env = env.bind(tasks.var(), m as i64);
                    let d = duration_ns(duration, &env)?;
                    ns[m as usize] = Some(d);
                }
                Plan::Compute { ns }
            }
            StmtKind::AwaitCompletion { tasks } => Plan::WaitAll { members: self.members(tasks)? },
            StmtKind::ResetCounters { tasks } => {
                Plan::Marker { marker: Marker::Reset, members: self.members(tasks)? }
            }
            StmtKind::ComputeAggregates { tasks } => {
                Plan::Marker { marker: Marker::Aggregate, members: self.members(tasks)? }
            }
            StmtKind::Log { tasks, items } => {
                let id = self.logs.len() as u32;
                self.logs.push(LogSpec { var: tasks.var().map(str::to_string), items: items.clone() });
                Plan::Marker { marker: Marker::Log(id), members: self.members(tasks)? }
            }
        })
    }

    fn route_csr(
        &self,
        routes: &[(u32, usize, u64, Peers)],
        mut draw: impl FnMut(u32, u32) -> u32,
    ) -> (Csr, Csr) {
        let n = self.n() as usize;
        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for (sender, count, bytes, peers) in routes {
            let targets = match peers {
                Peers::Fixed(t) => t.clone(),
                Peers::RandomOther(other) => vec![draw(*sender, *other)],
            };
            for t in targets {
                for _ in 0..*count {
                    outgoing[*sender as usize].push((t, *bytes));
                    incoming[t as usize].push((*sender, *bytes));
                }
            }
        }
        (Csr::from_lists(outgoing), Csr::from_lists(incoming))
    }
}

enum Peers {
    Fixed(Vec<u32>),
    RandomOther(u32),
}

fn contains_random(plan: &[Plan]) -> bool {
    plan.iter().any(|p| match p {
        Plan::Loop { body, .. } => contains_random(body),
        Plan::P2p { routes: P2p::Random { .. }, .. } => true,
        _ => false,
    })
}

/// A rank stream flattened for execution. Loops become enter/repeat
/// pairs so a [`Cursor`] can walk it without borrowing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code {
    steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    Op(SkeletonOp),
    Enter { count: u64, exit: usize },
    Repeat { enter: usize },
}

impl Code {
    pub fn compile(ops: &[SkeletonOp]) -> Code {
        let mut steps = Vec::new();
        fn emit(ops: &[SkeletonOp], steps: &mut Vec<Step>) {
            for op in ops {
                match op {
                    SkeletonOp::Loop { count, body } => {
                        let enter = steps.len();
                        steps.push(Step::Enter { count: *count, exit: 0 });
                        emit(body, steps);
                        steps.push(Step::Repeat { enter });
                        let exit = steps.len();
                        steps[enter] = Step::Enter { count: *count, exit };
                    }
                    op => steps.push(Step::Op(op.clone())),
                }
            }
        }
        emit(ops, &mut steps);
        Code { steps }
    }
}

/// Position in a [`Code`] stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cursor {
    pc: usize,
    remaining: Vec<u64>,
}

impl Cursor {
    /// Next leaf operation, or `None` once the stream is exhausted.
    pub fn next<'c>(&mut self, code: &'c Code) -> Option<&'c SkeletonOp> {
        loop {
            match code.steps.get(self.pc)? {
                Step::Op(op) => {
                    self.pc += 1;
                    return Some(op);
                }
                Step::Enter { count, exit } => {
                    if *count == 0 {
                        self.pc = *exit;
                    } else {
                        self.remaining.push(*count);
                        self.pc += 1;
                    }
                }
                Step::Repeat { enter } => {
                    let left = self.remaining.last_mut().expect("unbalanced loop");
                    *left -= 1;
                    if *left > 0 {
                        self.pc = enter + 1;
                    } else {
                        self.remaining.pop();
                        self.pc += 1;
                    }
                }
            }
        }
    }
}

/// Convenience: parse, check and skeletonize in one go.
pub fn compile_source(
    name: &str,
    source: &str,
    num_tasks: u32,
    overrides: &Binding,
    seed: u64,
) -> Result<SkeletonProgram, DslError> {
    let program = crate::dsl::parse_source(source)?;
    let validated = check::check(&program, num_tasks, overrides)?.with_seed(seed);
    skeletonize(name, &validated).map_err(|SkeletonError::Dsl(e)| e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SkeletonOp::*;

    pub(crate) const PING_PONG: &str = include_str!("../../../../workloads/pingpong.u");

    fn compile(src: &str, n: u32, overrides: &[(&str, i64)]) -> SkeletonProgram {
        let o: Binding = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        compile_source("t", src, n, &o, 0).unwrap()
    }

    #[test]
    fn ping_pong_rank_streams() {
        let sk = compile(PING_PONG, 2, &[]);
        assert_eq!(
            sk.stream(0),
            vec![
                Loop {
                    count: 1000,
                    body: vec![
                        Marker(super::Marker::Reset),
                        Send { dst: 1, bytes: 1024, blocking: true },
                        Recv { src: 1, bytes: 1024, blocking: true },
                        Marker(super::Marker::Log(0)),
                    ]
                },
                Marker(super::Marker::Aggregate),
                End,
            ]
        );
        assert_eq!(
            sk.stream(1),
            vec![
                Loop {
                    count: 1000,
                    body: vec![
                        Recv { src: 0, bytes: 1024, blocking: true },
                        Send { dst: 0, bytes: 1024, blocking: true },
                    ]
                },
                End,
            ]
        );
    }

    #[test]
    fn compute_becomes_nanoseconds() {
        let sk = compile("all tasks compute for 129000 microseconds.", 3, &[]);
        for r in 0..3 {
            assert_eq!(sk.stream(r), vec![Compute { ns: 129_000_000 }, End]);
        }
    }

    #[test]
    fn blocking_exchange_gets_posted_receives() {
        let sk = compile("all tasks t send a 8 byte message to task (t + 1) mod num_tasks.", 3, &[]);
        assert_eq!(
            sk.stream(0),
            vec![
                Recv { src: 2, bytes: 8, blocking: false },
                Send { dst: 1, bytes: 8, blocking: true },
                WaitAll,
                End
            ]
        );
    }

    #[test]
    fn random_loops_unroll_and_match() {
        let src = "For 4 repetitions { all tasks t asynchronously send a 10 byte message to a random task other than t then all tasks await completion }.";
        let sk = compile(src, 5, &[]);
        let streams: Vec<_> = (0..5).map(|r| sk.stream(r)).collect();
        let sends: usize = streams.iter().flatten().filter(|o| matches!(o, Send { .. })).count();
        let recvs: usize = streams.iter().flatten().filter(|o| matches!(o, Recv { .. })).count();
        assert_eq!((sends, recvs), (20, 20));
        assert!(streams.iter().flatten().all(|o| !matches!(o, Loop { .. })));
        assert_eq!(sk.stream(3), streams[3]);
    }

    #[test]
    fn cursor_walks_nested_loops() {
        let ops = vec![
            Loop { count: 2, body: vec![Compute { ns: 1 }, Loop { count: 3, body: vec![WaitAll] }] },
            Loop { count: 0, body: vec![Compute { ns: 9 }] },
            End,
        ];
        let code = Code::compile(&ops);
        let mut c = Cursor::default();
        let mut seen = Vec::new();
        while let Some(op) = c.next(&code) {
            seen.push(op.clone());
        }
        let w = WaitAll;
        let c1 = Compute { ns: 1 };
        assert_eq!(seen, vec![c1.clone(), w.clone(), w.clone(), w.clone(), c1, w.clone(), w.clone(), w, End]);
    }

    #[test]
    fn collectives_share_group_ids() {
        let sk = compile(
            "all tasks reduce a 8 byte message then task 0 broadcasts a 4 byte message to all tasks then tasks from 0 to 1 synchronize.",
            4,
            &[],
        );
        let s = sk.stream(2);
        assert_eq!(s[0], AllReduce { group: 0, bytes: 8 });
        assert_eq!(s[1], Bcast { root: 0, group: 0, bytes: 4 });
        assert_eq!(s[2], End);
        assert_eq!(sk.stream(1)[2], Barrier { group: 1 });
        assert_eq!(sk.group(1), &[0, 1]);
    }
}
