//! Job placement: random nodes (RN), random routers (RR), random groups (RG).
//!
//! Jobs are placed one after another in the given order. Under RR a job
//! only takes routers no other job has touched, filling each router's
//! nodes in order before drawing the next. Under RG the same holds for
//! whole groups. When a policy runs out of untouched routers or groups it
//! falls back to the next finer policy on the remaining free nodes and
//! records the fallback.

use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Rn,
    Rr,
    Rg,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Rn => "rn",
            Policy::Rr => "rr",
            Policy::Rg => "rg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlacementError {
    #[error("insufficient nodes: jobs need {needed} nodes but the network has {available}")]
    InsufficientNodes { needed: u64, available: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Placement {
    /// Node of every rank, one list per job.
    pub maps: Vec<Vec<NodeId>>,
    /// Human-readable notes on fallbacks taken.
    pub fallbacks: Vec<String>,
}

impl Placement {
    /// `app,rank,node,router,group` rows for every rank.
    pub fn to_csv(&self, labels: &[String], net: &Network) -> String {
        let mut out = String::from("app,rank,node,router,group\n");
        for (label, map) in labels.iter().zip(&self.maps) {
            for (rank, &node) in map.iter().enumerate() {
                writeln!(out, "{label},{rank},{node},{},{}", net.router_of(node), net.group_of(node)).unwrap();
            }
        }
        out
    }
}

struct Free<'a> {
    net: &'a Network,
    free: Vec<bool>,
}

impl Free<'_> {
    fn untouched(&self, nodes: std::ops::Range<u32>) -> bool {
        nodes.into_iter().all(|n| self.free[n as usize])
    }

    fn router_nodes(&self, r: u32) -> std::ops::Range<u32> {
        let k = self.net.config().nodes_per_router;
        r * k..(r + 1) * k
    }

    fn group_nodes(&self, g: u32) -> std::ops::Range<u32> {
        let k = self.net.nodes_per_group();
        g * k..(g + 1) * k
    }

    fn take_block(&mut self, nodes: std::ops::Range<u32>, out: &mut Vec<NodeId>, want: usize) {
        for n in nodes {
            if out.len() == want {
                return;
            }
            if self.free[n as usize] {
                self.free[n as usize] = false;
                out.push(n);
            }
        }
    }

    fn random_nodes(&mut self, out: &mut Vec<NodeId>, want: usize, rng: &mut impl Rng) {
        let mut pool: Vec<u32> = (0..self.free.len() as u32).filter(|&n| self.free[n as usize]).collect();
        pool.shuffle(rng);
        for n in pool.into_iter().take(want - out.len()) {
            self.free[n as usize] = false;
            out.push(n);
        }
    }

    fn random_routers(&mut self, out: &mut Vec<NodeId>, want: usize, rng: &mut impl Rng) -> bool {
        let mut pool: Vec<u32> =
            (0..self.net.num_routers()).filter(|&r| self.untouched(self.router_nodes(r))).collect();
        pool.shuffle(rng);
        for r in pool {
            if out.len() == want {
                break;
            }
            self.take_block(self.router_nodes(r), out, want);
        }
        out.len() == want
    }

    fn random_groups(&mut self, out: &mut Vec<NodeId>, want: usize, rng: &mut impl Rng) -> bool {
        let mut pool: Vec<u32> =
            (0..self.net.num_groups()).filter(|&g| self.untouched(self.group_nodes(g))).collect();
        pool.shuffle(rng);
        for g in pool {
            if out.len() == want {
                break;
            }
            self.take_block(self.group_nodes(g), out, want);
        }
        out.len() == want
    }
}

/// Places `jobs` (label, rank count) on `net`, drawing from `rng`.
pub fn place(
    policy: Policy,
    jobs: &[(String, u32)],
    net: &Network,
    rng: &mut impl Rng,
) -> Result<Placement, PlacementError> {
    let needed: u64 = jobs.iter().map(|(_, n)| *n as u64).sum();
    if needed > net.num_nodes() as u64 {
        return Err(PlacementError::InsufficientNodes { needed, available: net.num_nodes() });
    }
    let mut state = Free { net, free: vec![true; net.num_nodes() as usize] };
    let mut out = Placement::default();
    for (label, ranks) in jobs {
        let want = *ranks as usize;
        let mut nodes = Vec::with_capacity(want);
        let mut policy = policy;
        loop {
            let done = match policy {
                Policy::Rg => state.random_groups(&mut nodes, want, rng),
                Policy::Rr => state.random_routers(&mut nodes, want, rng),
                Policy::Rn => {
                    state.random_nodes(&mut nodes, want, rng);
                    true
                }
            };
            if done {
                break;
            }
            let next = if policy == Policy::Rg { Policy::Rr } else { Policy::Rn };
            out.fallbacks.push(format!(
                "{label}: no untouched {} left after {} of {want} ranks, continuing with {next}",
                if policy == Policy::Rg { "group" } else { "router" },
                nodes.len(),
            ));
            policy = next;
        }
        out.maps.push(nodes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::TopologyConfig;
    use crate::rng::{stream, Stream};
    use std::collections::BTreeSet;

    fn jobs(sizes: &[u32]) -> Vec<(String, u32)> {
        sizes.iter().enumerate().map(|(i, &n)| (format!("j{i}"), n)).collect()
    }

    fn net() -> Network {
        Network::build(&TopologyConfig::mini_1d()).unwrap()
    }

    #[test]
    fn rg_small_job_stays_in_one_group() {
        let net = net();
        let p = place(Policy::Rg, &jobs(&[4]), &net, &mut stream(1, Stream::Placement)).unwrap();
        let groups: BTreeSet<_> = p.maps[0].iter().map(|&n| net.group_of(n)).collect();
        assert_eq!(groups.len(), 1);
    }

    #[test]
    fn rr_fills_routers_consecutively() {
        let net = net();
        let p = place(Policy::Rr, &jobs(&[3]), &net, &mut stream(2, Stream::Placement)).unwrap();
        let routers: BTreeSet<_> = p.maps[0].iter().map(|&n| net.router_of(n)).collect();
        assert_eq!(routers.len(), 2);
    }

    #[test]
    fn rn_can_fill_the_machine() {
        let net = net();
        let half = net.num_nodes() / 2;
        let p = place(Policy::Rn, &jobs(&[half, net.num_nodes() - half]), &net, &mut stream(3, Stream::Placement))
            .unwrap();
        let all: BTreeSet<_> = p.maps.iter().flatten().copied().collect();
        assert_eq!(all.len() as u32, net.num_nodes());
    }

    #[test]
    fn too_many_ranks() {
        let net = net();
        let err = place(Policy::Rn, &jobs(&[net.num_nodes() + 1]), &net, &mut stream(0, Stream::Placement));
        assert!(matches!(err, Err(PlacementError::InsufficientNodes { .. })));
    }

    #[test]
    fn rg_falls_back_when_groups_run_out() {
        let net = net();
        // mini-1D has 8 nodes per group: each 5-rank job spoils a group
        let p = place(Policy::Rg, &jobs(&[5, 5, 5, 5]), &net, &mut stream(4, Stream::Placement)).unwrap();
        assert_eq!(p.fallbacks.len(), 1, "{:?}", p.fallbacks);
        assert!(p.fallbacks[0].starts_with("j3"));
    }

    #[test]
    fn csv_rows() {
        let net = net();
        let p = place(Policy::Rr, &jobs(&[2]), &net, &mut stream(5, Stream::Placement)).unwrap();
        let csv = p.to_csv(&["a".into()], &net);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("a,0,"));
    }
}
