//! A second, independent audit that walks the AST directly.
//!
//! Nothing here goes through the skeleton plan or rank streams: every
//! statement execution recomputes which ranks take part, what each sends
//! and receives, and appends the resulting operations to per-rank digests.
//! Agreement with [`audit`](super::audit::audit) is the equivalence check
//! between a program and its skeleton.

use std::collections::HashMap;

use super::audit::{AuditReport, EventCounts, RankDigest, Trace};
use super::site_id;
use crate::dsl::ast::{SendMode, Stmt, StmtKind, Target};
use crate::dsl::check::{duration_ns, eval, members, size_bytes, static_targets, Env};
use crate::dsl::{DslError, ValidatedProgram};
use crate::rng;
use crate::skeleton::Marker;

struct Interp<'a> {
    program: &'a ValidatedProgram,
    n: u32,
    counts: EventCounts,
    bytes: Vec<u64>,
    digests: Vec<RankDigest>,
    occurrences: HashMap<u64, u64>,
}

pub fn reference_audit(name: &str, program: &ValidatedProgram) -> Result<AuditReport, DslError> {
    let n = program.num_tasks;
    let mut it = Interp {
        program,
        n,
        counts: EventCounts { init: n as u64, finalize: n as u64, ..Default::default() },
        bytes: vec![0; n as usize],
        digests: vec![RankDigest::default(); n as usize],
        occurrences: HashMap::new(),
    };
    for d in &mut it.digests {
        d.push(Trace::Init);
    }
    it.block(&program.program.body)?;
    for d in &mut it.digests {
        d.push(Trace::Finalize);
    }
    Ok(AuditReport {
        name: name.to_string(),
        counts: it.counts,
        bytes: it.bytes,
        digests: it.digests.into_iter().map(RankDigest::finish).collect(),
    })
}

impl<'a> Interp<'a> {
    fn block(&mut self, stmts: &'a [Stmt]) -> Result<(), DslError> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &'a Stmt) -> Result<(), DslError> {
        let env: Env<'a> = self.program.env();
        match &s.kind {
            StmtKind::Repeat { count, body } => {
                for _ in 0..eval(count, &env)? {
                    self.block(body)?;
                }
            }
            StmtKind::Send { senders, count, size, target, mode } => {
                let occurrence = {
                    let k = self.occurrences.entry(site_id(s)).or_insert(0);
                    *k += 1;
                    *k - 1
                };
                let mut sends: Vec<Vec<(u32, u64)>> = vec![Vec::new(); self.n as usize];
                let mut recvs: Vec<Vec<(u32, u64)>> = vec![Vec::new(); self.n as usize];
                for sender in members(senders, &env)? {
                    let env = env.bind(senders.var(), sender as i64);
                    let reps = eval(count, &env)?;
                    let b = size_bytes(size, &env)?;
                    let peers = match target {
                        Target::RandomOther(other) => vec![rng::random_other(
                            self.program.seed,
                            site_id(s),
                            sender,
                            occurrence,
                            self.n,
                            eval(other, &env)? as u32,
                        )],
                        _ => static_targets(target, &env, sender)?.expect("static target"),
                    };
                    for p in peers {
                        for _ in 0..reps {
                            sends[sender as usize].push((p, b));
                        }
                    }
                }
                // Receives are posted in ascending source order.
                for src in 0..self.n {
                    for &(dst, b) in &sends[src as usize] {
                        recvs[dst as usize].push((src, b));
                    }
                }
                for r in 0..self.n as usize {
                    let (out, inc) = (&sends[r], &recvs[r]);
                    let both = !out.is_empty() && !inc.is_empty();
                    let block_recv = *mode == SendMode::Blocking && !both;
                    let block_send = *mode == SendMode::Blocking;
                    let d = &mut self.digests[r];
                    for &(src, b) in inc {
                        d.push(Trace::Recv { src, bytes: b, blocking: block_recv });
                    }
                    for &(dst, b) in out {
                        d.push(Trace::Send { dst, bytes: b, blocking: block_send });
                        self.bytes[r] += b;
                    }
                    if both && *mode == SendMode::Blocking {
                        d.push(Trace::WaitAll);
                    }
                    self.counts.send += out.len() as u64;
                    self.counts.recv += inc.len() as u64;
                }
            }
            StmtKind::Reduce { tasks, size, .. } => {
                let group = members(tasks, &env)?;
                let b = size_bytes(size, &env)?;
                for &m in &group {
                    self.digests[m as usize].push(Trace::AllReduce { group: &group, bytes: b });
                    self.bytes[m as usize] += b;
                }
                self.counts.allreduce += !group.is_empty() as u64;
            }
            StmtKind::Broadcast { root, tasks, size } => {
                let group = members(tasks, &env)?;
                let root = eval(root, &env)? as u32;
                let b = size_bytes(size, &env)?;
                for &m in &group {
                    self.digests[m as usize].push(Trace::Bcast { root, group: &group, bytes: b });
                    if m != root {
                        self.bytes[m as usize] += b;
                    }
                }
                self.counts.bcast += !group.is_empty() as u64;
            }
            StmtKind::Synchronize { tasks } => {
                let group = members(tasks, &env)?;
                for &m in &group {
                    self.digests[m as usize].push(Trace::Barrier { group: &group });
                }
                self.counts.barrier += !group.is_empty() as u64;
            }
            StmtKind::Compute { tasks, duration } => {
                for m in members(tasks, &env)? {
                    let ns = duration_ns(duration, &env.bind(tasks.var(), m as i64))?;
                    self.digests[m as usize].push(Trace::Compute { ns });
                }
            }
            StmtKind::AwaitCompletion { tasks } => {
                for m in members(tasks, &env)? {
                    self.digests[m as usize].push(Trace::WaitAll);
                }
            }
            StmtKind::ResetCounters { tasks } => self.mark(Marker::Reset, &members(tasks, &env)?),
            StmtKind::Log { tasks, .. } => self.mark(Marker::Log(0), &members(tasks, &env)?),
            StmtKind::ComputeAggregates { tasks } => self.mark(Marker::Aggregate, &members(tasks, &env)?),
        }
        Ok(())
    }

    fn mark(&mut self, m: Marker, who: &[u32]) {
        for &r in who {
            self.digests[r as usize].push(Trace::Mark(m));
        }
    }
}
