//! Oracles shared by the integration and acceptance tests. Nothing here
//! calls the simulator's routing or timing code; hop counts come from a
//! breadth-first search over the link table and latencies from the
//! per-hop sum written out by hand.
#![allow(dead_code)]

use std::collections::VecDeque;

use dfsim::network::{Port, TopologyConfig};
use dfsim::{LinkClass, Network, NodeId};

/// Router-to-router hops of a shortest path using at most one global
/// link, split by class as (local, global).
pub fn minimal_hops(net: &Network, src: u32, dst: u32) -> (u32, u32) {
    let n = net.num_routers() as usize;
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for l in net.links() {
        if let (Port::Router(a), Port::Router(b)) = (l.from, l.to) {
            adj[a as usize].push((b as usize, l.class == LinkClass::Global));
        }
    }
    // state: router * 2 + globals used
    let mut dist = vec![u32::MAX; 2 * n];
    let mut q = VecDeque::new();
    dist[2 * src as usize] = 0;
    q.push_back((src as usize, 0usize));
    while let Some((r, g)) = q.pop_front() {
        let d = dist[2 * r + g];
        for &(next, global) in &adj[r] {
            let ng = g + global as usize;
            if ng > 1 || dist[2 * next + ng] != u32::MAX {
                continue;
            }
            dist[2 * next + ng] = d + 1;
            q.push_back((next, ng));
        }
    }
    let (d0, d1) = (dist[2 * dst as usize], dist[2 * dst as usize + 1]);
    if d0 <= d1 {
        (d0, 0)
    } else {
        (d1 - 1, 1)
    }
}

fn occupancy(bytes: u64, gib: f64) -> u64 {
    let bw = (gib * (1u64 << 30) as f64).round() as u128;
    ((bytes as u128 * 1_000_000_000).div_ceil(bw)) as u64
}

/// Idle-network latency of a single-packet message between two nodes
/// over a minimal path.
pub fn idle_latency(net: &Network, src: NodeId, dst: NodeId, bytes: u64) -> u64 {
    let c: &TopologyConfig = net.config();
    assert!(bytes <= c.packet_size, "oracle covers single-packet messages");
    let (local, global) = minimal_hops(net, net.router_of(src), net.router_of(dst));
    let l = c.link_latency_ns;
    2 * (occupancy(bytes, c.terminal_bw_gib) + l)
        + local as u64 * (occupancy(bytes, c.local_bw_gib) + l)
        + global as u64 * (occupancy(bytes, c.global_bw_gib) + l)
        + (local + global + 1) as u64 * c.router_delay_ns
}

/// Random well-formed programs over `n` tasks, built from every statement
/// form the workloads use.
pub mod programs {
    use proptest::prelude::*;

    fn stmt(n: u32) -> impl Strategy<Value = String> {
        let size = 1u64..20_000;
        let task = 0..n;
        prop_oneof![
            (size.clone(), 1..n).prop_map(|(s, k)| format!(
                "all tasks t asynchronously send a {s} byte message to task (t + {k}) mod num_tasks"
            )),
            size.clone().prop_map(|s| format!("all tasks t send a {s} byte message to task (t + 1) mod num_tasks")),
            (size.clone(), task.clone(), 1..n).prop_map(move |(s, a, k)| format!(
                "task {a} sends a {s} byte message to task {}",
                (a + k) % n
            )),
            size.clone().prop_map(|s| format!("all tasks reduce a {s} byte message")),
            (size.clone(), task.clone()).prop_map(|(s, r)| format!("task {r} broadcasts a {s} byte message to all tasks")),
            Just("all tasks synchronize".to_string()),
            (1u64..50).prop_map(|d| format!("all tasks compute for {d} microseconds")),
            Just("all tasks await completion".to_string()),
            (size, task.clone(), task).prop_map(|(s, a, b)| {
                let (lo, hi) = (a.min(b), a.max(b));
                format!("tasks s from {lo} to {hi} asynchronously send a {s} byte message to a random task other than s")
            }),
        ]
    }

    fn block(n: u32, depth: u32) -> BoxedStrategy<String> {
        let leaf = prop::collection::vec(stmt(n), 1..4).prop_map(|v| v.join(" then\n")).boxed();
        if depth == 0 {
            return leaf;
        }
        prop_oneof![
            3 => leaf,
            1 => (1u32..4, block(n, depth - 1)).prop_map(|(c, b)| format!("For {c} repetitions {{\n{b}\n}}")),
        ]
        .boxed()
    }

    /// (task count, program source).
    pub fn program() -> impl Strategy<Value = (u32, String)> {
        (2u32..10).prop_flat_map(|n| {
            (Just(n), prop::collection::vec(block(n, 2), 1..4).prop_map(|v| v.join(" then\n") + "."))
        })
    }
}
