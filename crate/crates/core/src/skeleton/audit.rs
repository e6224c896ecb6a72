//! Zero-latency audit of a skeleton.
//!
//! Every rank's stream is executed against an idealized network in which
//! matched messages are delivered instantly. The audit tallies operation
//! events, attributes transmitted bytes to ranks, and hashes each rank's
//! executed operation sequence.
//!
//! Counting conventions:
//!
//! * `allreduce`, `bcast` and `barrier` count once per execution of the
//!   collective statement, not once per participant;
//! * `send` and `recv` count once per point-to-point operation per rank;
//! * `init` and `finalize` count once per rank.
//!
//! Byte attribution: a SEND adds its size to the sender, an ALLREDUCE adds
//! its size to every participant, a BCAST adds its size to every
//! participant other than the root.

use std::collections::{HashMap, VecDeque};
use std::fmt::{self, Write as _};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Code, Cursor, GroupId, Marker, SkeletonOp, SkeletonProgram};

pub const CONVENTIONS: &str = "\
# collectives (allreduce, bcast, barrier) count once per call-site execution
# send and recv count once per operation per rank; init and finalize once per rank
# bytes: send -> sender, allreduce -> every participant, bcast -> every non-root participant";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("deadlock: rank {rank} blocked in {op} with no runnable rank left")]
    DeadlockDetected { rank: u32, op: String },
    #[error("message size mismatch from rank {src} to rank {dst}: sent {sent} bytes, receive posted for {posted}")]
    MatchError { src: u32, dst: u32, sent: u64, posted: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub init: u64,
    pub send: u64,
    pub recv: u64,
    pub allreduce: u64,
    pub bcast: u64,
    pub barrier: u64,
    pub finalize: u64,
}

impl EventCounts {
    pub fn rows(&self) -> [(&'static str, u64); 7] {
        [
            ("init", self.init),
            ("send", self.send),
            ("recv", self.recv),
            ("allreduce", self.allreduce),
            ("bcast", self.bcast),
            ("barrier", self.barrier),
            ("finalize", self.finalize),
        ]
    }

    fn slot(&mut self, kind: &str) -> Option<&mut u64> {
        Some(match kind {
            "init" => &mut self.init,
            "send" => &mut self.send,
            "recv" => &mut self.recv,
            "allreduce" => &mut self.allreduce,
            "bcast" => &mut self.bcast,
            "barrier" => &mut self.barrier,
            "finalize" => &mut self.finalize,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub name: String,
    pub counts: EventCounts,
    /// Logical bytes transmitted, indexed by rank.
    pub bytes: Vec<u64>,
    /// Hex sha256 of each rank's executed operation sequence.
    pub digests: Vec<String>,
}

/// One executed operation as it enters a rank's control-flow digest.
/// Groups are summarized by size and extremes.
pub(crate) enum Trace<'a> {
    Init,
    Send { dst: u32, bytes: u64, blocking: bool },
    Recv { src: u32, bytes: u64, blocking: bool },
    WaitAll,
    AllReduce { group: &'a [u32], bytes: u64 },
    Bcast { root: u32, group: &'a [u32], bytes: u64 },
    Barrier { group: &'a [u32] },
    Compute { ns: u64 },
    Mark(Marker),
    Finalize,
}

#[derive(Clone, Default)]
pub(crate) struct RankDigest(Sha256);

impl RankDigest {
    pub(crate) fn push(&mut self, t: Trace<'_>) {
        let h = &mut self.0;
        let group = |h: &mut Sha256, g: &[u32]| {
            h.update((g.len() as u64).to_le_bytes());
            h.update(g.first().copied().unwrap_or(0).to_le_bytes());
            h.update(g.last().copied().unwrap_or(0).to_le_bytes());
        };
        match t {
            Trace::Init => h.update(b"I"),
            Trace::Send { dst, bytes, blocking } => {
                h.update(if blocking { b"S" } else { b"s" });
                h.update(dst.to_le_bytes());
                h.update(bytes.to_le_bytes());
            }
            Trace::Recv { src, bytes, blocking } => {
                h.update(if blocking { b"R" } else { b"r" });
                h.update(src.to_le_bytes());
                h.update(bytes.to_le_bytes());
            }
            Trace::WaitAll => h.update(b"W"),
            Trace::AllReduce { group: g, bytes } => {
                h.update(b"A");
                group(h, g);
                h.update(bytes.to_le_bytes());
            }
            Trace::Bcast { root, group: g, bytes } => {
                h.update(b"B");
                h.update(root.to_le_bytes());
                group(h, g);
                h.update(bytes.to_le_bytes());
            }
            Trace::Barrier { group: g } => {
                h.update(b"Y");
                group(h, g);
            }
            Trace::Compute { ns } => {
                h.update(b"C");
                h.update(ns.to_le_bytes());
            }
            Trace::Mark(m) => h.update(match m {
                Marker::Reset => b"Mr",
                Marker::Log(_) => b"Ml",
                Marker::Aggregate => b"Ma",
            }),
            Trace::Finalize => h.update(b"F"),
        }
    }

    pub(crate) fn finish(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl AuditReport {
    /// CSV with an `op_kind,count` section, a blank line, then a
    /// `rank,bytes` section. Lines starting with `#` are comments.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# audit of {} on {} ranks", self.name, self.bytes.len()).unwrap();
        writeln!(out, "{CONVENTIONS}").unwrap();
        out.push_str("op_kind,count\n");
        for (k, v) in self.counts.rows() {
            writeln!(out, "{k},{v}").unwrap();
        }
        out.push_str("\nrank,bytes\n");
        for (r, b) in self.bytes.iter().enumerate() {
            writeln!(out, "{r},{b}").unwrap();
        }
        out
    }

    /// Parses the CSV produced by [`AuditReport::to_csv`]. Digests are not
    /// part of the CSV and come back empty.
    pub fn from_csv(text: &str) -> Result<AuditReport, String> {
        let mut counts = EventCounts::default();
        let mut bytes = Vec::new();
        let mut section = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "op_kind,count" || line == "rank,bytes" {
                section = Some(line.to_string());
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| format!("line {}: expected two fields", i + 1))?;
            let value: u64 = b.trim().parse().map_err(|_| format!("line {}: bad number `{b}`", i + 1))?;
            match section.as_deref() {
                Some("op_kind,count") => {
                    *counts.slot(a.trim()).ok_or_else(|| format!("line {}: unknown op kind `{a}`", i + 1))? = value;
                }
                Some(_) => {
                    let rank: usize = a.trim().parse().map_err(|_| format!("line {}: bad rank `{a}`", i + 1))?;
                    if rank != bytes.len() {
                        return Err(format!("line {}: ranks must be listed in order", i + 1));
                    }
                    bytes.push(value);
                }
                None => return Err(format!("line {}: data before a section header", i + 1)),
            }
        }
        Ok(AuditReport { name: String::new(), counts, bytes, digests: Vec::new() })
    }

    /// Differences in counts and bytes against `expected`, one per line.
    pub fn diff(&self, expected: &AuditReport) -> Vec<String> {
        let mut out = Vec::new();
        for ((k, got), (_, want)) in self.counts.rows().iter().zip(expected.counts.rows()) {
            if *got != want {
                out.push(format!("{k}: got {got}, expected {want}"));
            }
        }
        if self.bytes.len() != expected.bytes.len() {
            out.push(format!("rank count: got {}, expected {}", self.bytes.len(), expected.bytes.len()));
        }
        for (r, (got, want)) in self.bytes.iter().zip(&expected.bytes).enumerate() {
            if got != want {
                out.push(format!("rank {r} bytes: got {got}, expected {want}"));
            }
        }
        out
    }
}

/// Human-readable report; runs of ranks with equal byte totals are merged.
impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "audit of {} on {} ranks", self.name, self.bytes.len())?;
        writeln!(f, "{CONVENTIONS}")?;
        writeln!(f, "events:")?;
        for (k, v) in self.counts.rows() {
            writeln!(f, "  {k:<10} {v}")?;
        }
        writeln!(f, "bytes transmitted:")?;
        let mut start = 0;
        while start < self.bytes.len() {
            let mut end = start;
            while end + 1 < self.bytes.len() && self.bytes[end + 1] == self.bytes[start] {
                end += 1;
            }
            let b = self.bytes[start];
            if start == end {
                writeln!(f, "  rank {start:<12} {b} ({b:.3e})")?;
            } else {
                writeln!(f, "  ranks {:<11} {b} ({b:.3e})", format!("{start}-{end}"))?;
            }
            start = end + 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wait {
    Running,
    Handle(usize),
    All,
    Collective(GroupId, u64),
    Done,
}

struct RankState {
    code: Code,
    cursor: Cursor,
    outstanding: Vec<usize>,
    wait: Wait,
    coll_seq: HashMap<GroupId, u64>,
    digest: RankDigest,
}

#[derive(Default)]
struct Channel {
    sends: VecDeque<(usize, u64)>,
    recvs: VecDeque<(usize, u64)>,
}

#[derive(Default)]
struct Gathering {
    arrived: usize,
    waiting: Vec<u32>,
}

/// Runs `program` under the zero-latency interpreter.
pub fn audit(program: &SkeletonProgram) -> Result<AuditReport, AuditError> {
    let n = program.num_tasks();
    let mut ranks: Vec<RankState> = (0..n)
        .map(|r| RankState {
            code: program.code(r),
            cursor: Cursor::default(),
            outstanding: Vec::new(),
            wait: Wait::Running,
            coll_seq: HashMap::new(),
            digest: RankDigest::default(),
        })
        .collect();
    let mut counts = EventCounts { init: n as u64, ..Default::default() };
    let mut bytes = vec![0u64; n as usize];
    // Handle id -> (owner, done).
    let mut handles: Vec<(u32, bool)> = Vec::new();
    let mut channels: HashMap<(u32, u32), Channel> = HashMap::new();
    let mut gatherings: HashMap<(GroupId, u64), Gathering> = HashMap::new();
    let mut ready: VecDeque<u32> = (0..n).collect();

    for r in &mut ranks {
        r.digest.push(Trace::Init);
    }

    // Marks a handle complete and readies its owner if that unblocks it.
    fn complete(
        h: usize,
        handles: &mut [(u32, bool)],
        ranks: &mut [RankState],
        ready: &mut VecDeque<u32>,
    ) {
        handles[h].1 = true;
        let owner = handles[h].0;
        let st = &mut ranks[owner as usize];
        let unblocked = match st.wait {
            Wait::Handle(x) => x == h,
            Wait::All => st.outstanding.iter().all(|&x| handles[x].1),
            _ => false,
        };
        if unblocked {
            st.wait = Wait::Running;
            ready.push_back(owner);
        }
    }

    while let Some(r) = ready.pop_front() {
        loop {
            let st = &mut ranks[r as usize];
            let Some(op) = st.cursor.next(&st.code) else {
                st.wait = Wait::Done;
                break;
            };
            let op = op.clone();
            match op {
                SkeletonOp::Send { dst, bytes: size, blocking } => {
                    st.digest.push(Trace::Send { dst, bytes: size, blocking });
                    counts.send += 1;
                    bytes[r as usize] += size;
                    let h = handles.len();
                    handles.push((r, false));
                    if !blocking {
                        ranks[r as usize].outstanding.push(h);
                    }
                    let ch = channels.entry((r, dst)).or_default();
                    if let Some((rh, posted)) = ch.recvs.pop_front() {
                        if posted != size {
                            return Err(AuditError::MatchError { src: r, dst, sent: size, posted });
                        }
                        complete(rh, &mut handles, &mut ranks, &mut ready);
                        handles[h].1 = true;
                    } else {
                        ch.sends.push_back((h, size));
                        if blocking {
                            ranks[r as usize].wait = Wait::Handle(h);
                            break;
                        }
                    }
                }
                SkeletonOp::Recv { src, bytes: size, blocking } => {
                    st.digest.push(Trace::Recv { src, bytes: size, blocking });
                    counts.recv += 1;
                    let h = handles.len();
                    handles.push((r, false));
                    if !blocking {
                        ranks[r as usize].outstanding.push(h);
                    }
                    let ch = channels.entry((src, r)).or_default();
                    if let Some((sh, sent)) = ch.sends.pop_front() {
                        if sent != size {
                            return Err(AuditError::MatchError { src, dst: r, sent, posted: size });
                        }
                        complete(sh, &mut handles, &mut ranks, &mut ready);
                        handles[h].1 = true;
                    } else {
                        ch.recvs.push_back((h, size));
                        if blocking {
                            ranks[r as usize].wait = Wait::Handle(h);
                            break;
                        }
                    }
                }
                SkeletonOp::WaitAll => {
                    st.digest.push(Trace::WaitAll);
                    if st.outstanding.iter().all(|&x| handles[x].1) {
                        st.outstanding.clear();
                    } else {
                        st.wait = Wait::All;
                        break;
                    }
                }
                SkeletonOp::AllReduce { group, .. }
                | SkeletonOp::Bcast { group, .. }
                | SkeletonOp::Barrier { group } => {
                    let members = program.group(group);
                    match op {
                        SkeletonOp::AllReduce { bytes: size, .. } => {
                            st.digest.push(Trace::AllReduce { group: members, bytes: size });
                            bytes[r as usize] += size;
                        }
                        SkeletonOp::Bcast { root, bytes: size, .. } => {
                            st.digest.push(Trace::Bcast { root, group: members, bytes: size });
                            if root != r {
                                bytes[r as usize] += size;
                            }
                        }
                        _ => st.digest.push(Trace::Barrier { group: members }),
                    }
                    let seq = st.coll_seq.entry(group).or_insert(0);
                    let key = (group, *seq);
                    *seq += 1;
                    let g = gatherings.entry(key).or_default();
                    g.arrived += 1;
                    if g.arrived == members.len() {
                        match op {
                            SkeletonOp::AllReduce { .. } => counts.allreduce += 1,
                            SkeletonOp::Bcast { .. } => counts.bcast += 1,
                            _ => counts.barrier += 1,
                        }
                        let g = gatherings.remove(&key).unwrap();
                        for w in g.waiting {
                            ranks[w as usize].wait = Wait::Running;
                            ready.push_back(w);
                        }
                    } else {
                        g.waiting.push(r);
                        ranks[r as usize].wait = Wait::Collective(key.0, key.1);
                        break;
                    }
                }
                SkeletonOp::Compute { ns } => st.digest.push(Trace::Compute { ns }),
                SkeletonOp::Marker(m) => st.digest.push(Trace::Mark(m)),
                SkeletonOp::End => {
                    st.digest.push(Trace::Finalize);
                    counts.finalize += 1;
                }
                SkeletonOp::Loop { .. } => unreachable!("loops are flattened by Code"),
            }
        }
    }

    if let Some((r, st)) = ranks.iter().enumerate().find(|(_, s)| s.wait != Wait::Done) {
        let op = match st.wait {
            Wait::Handle(_) => "a blocking point-to-point operation".to_string(),
            Wait::All => "WAITALL".to_string(),
            Wait::Collective(g, _) => format!("a collective over {} ranks", program.group(g).len()),
            Wait::Running | Wait::Done => "an unfinished stream".to_string(),
        };
        return Err(AuditError::DeadlockDetected { rank: r as u32, op });
    }
    if let Some(ch) = channels.values().find(|c| !c.sends.is_empty() || !c.recvs.is_empty()) {
        let h = ch.sends.front().or(ch.recvs.front()).unwrap().0;
        return Err(AuditError::DeadlockDetected {
            rank: handles[h].0,
            op: "an unmatched nonblocking operation".into(),
        });
    }
    Ok(AuditReport {
        name: program.name().to_string(),
        counts,
        bytes,
        digests: ranks.into_iter().map(|s| s.digest.finish()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Binding;
    use crate::skeleton::compile_source;

    fn run(src: &str, n: u32, overrides: &[(&str, i64)]) -> Result<AuditReport, AuditError> {
        let o: Binding = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        audit(&compile_source("t", src, n, &o, 0).unwrap())
    }

    #[test]
    fn ping_pong_single_iteration() {
        let r = run(crate::skeleton::tests::PING_PONG, 2, &[("reps", 1)]).unwrap();
        assert_eq!(
            r.counts,
            EventCounts { init: 2, send: 2, recv: 2, finalize: 2, ..Default::default() }
        );
        assert_eq!(r.bytes, vec![1024, 1024]);
    }

    #[test]
    fn collective_counts_are_per_call_site() {
        let r = run(
            "For 3 repetitions { all tasks reduce a 8 byte message then task 1 broadcasts a 2 byte message to all tasks }.",
            4,
            &[],
        )
        .unwrap();
        assert_eq!((r.counts.allreduce, r.counts.bcast), (3, 3));
        assert_eq!(r.bytes, vec![30, 24, 30, 30]);
    }

    #[test]
    fn unmatched_blocking_send_deadlocks() {
        let sk = SkeletonProgram::from_streams(
            "t",
            vec![],
            vec![vec![SkeletonOp::Send { dst: 1, bytes: 4, blocking: true }], vec![]],
        );
        assert!(matches!(audit(&sk), Err(AuditError::DeadlockDetected { rank: 0, .. })));
        let sk = SkeletonProgram::from_streams(
            "t",
            vec![],
            vec![
                vec![SkeletonOp::Send { dst: 1, bytes: 4, blocking: false }],
                vec![SkeletonOp::Recv { src: 0, bytes: 8, blocking: true }],
            ],
        );
        assert!(matches!(audit(&sk), Err(AuditError::MatchError { sent: 4, posted: 8, .. })));
    }

    #[test]
    fn csv_round_trip_and_diff() {
        let r = run("all tasks t send a 8 byte message to task (t + 1) mod num_tasks.", 3, &[]).unwrap();
        let csv = r.to_csv();
        let back = AuditReport::from_csv(&csv).unwrap();
        assert_eq!((back.counts, &back.bytes), (r.counts, &r.bytes));
        assert!(r.diff(&back).is_empty());
        let mut other = back.clone();
        other.bytes[1] = 9;
        assert_eq!(r.diff(&other), vec!["rank 1 bytes: got 8, expected 9".to_string()]);
        assert!(r.to_string().contains("ranks 0-2"));
    }
}
