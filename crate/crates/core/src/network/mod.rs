//! Dragonfly networks: construction, link queues and routing.
//!
//! Routers are numbered group-major. In a 2D group, router `i` sits at row
//! `i / cols`, column `i % cols`; routers sharing a row or a column are
//! fully connected. A 1D group is a single fully connected row.
//!
//! Global links use the consecutive arrangement. The endpoints of group
//! `g`, enumerated router-major then port, go to groups `g+1, g+2, ...`
//! modulo the group count, skipping `g` and wrapping, so every group pair
//! gets the same number of links. The k-th endpoint of `g` facing `h` is
//! joined to the k-th endpoint of `h` facing `g`.
//!
//! A packet spends `ceil(size / bandwidth)` on every link it crosses plus
//! the link latency, and the router delay at every router it enters.

mod config;
mod routing;

use std::collections::VecDeque;

use thiserror::Error;

pub use config::{bytes_per_second, occupancy_ns, TopologyConfig, Variant, GLOBAL_BW_GIB, LOCAL_BW_GIB, TERMINAL_BW_GIB};
pub use routing::{Route, RouteClass, Routing};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("invalid topology: {0}")]
    InvalidConfig(String),
}

pub type RouterId = u32;
pub type NodeId = u32;
pub type LinkId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkClass {
    Terminal,
    Local,
    Global,
}

impl LinkClass {
    pub fn name(self) -> &'static str {
        match self {
            LinkClass::Terminal => "terminal",
            LinkClass::Local => "local",
            LinkClass::Global => "global",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Port {
    Node(NodeId),
    Router(RouterId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Router {
    pub id: RouterId,
    pub group: u32,
    pub row: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub from: Port,
    pub to: Port,
    pub class: LinkClass,
    /// Bytes per second.
    pub bandwidth: u64,
}

/// A global link from router `from` (in the source group) to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gateway {
    pub from: RouterId,
    pub to: RouterId,
    pub link: LinkId,
}

/// FIFO output queue of one link.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkState {
    pub busy_until: u64,
    pub total_bytes: u64,
    pub packets: u64,
    /// Packets not yet fully serialized: (finish time, bytes).
    in_flight: VecDeque<(u64, u64)>,
    in_flight_bytes: u64,
}

impl LinkState {
    fn prune(&mut self, now: u64) {
        while let Some(&(finish, bytes)) = self.in_flight.front() {
            if finish > now {
                break;
            }
            self.in_flight.pop_front();
            self.in_flight_bytes -= bytes;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    config: TopologyConfig,
    routers: Vec<Router>,
    links: Vec<Link>,
    state: Vec<LinkState>,
    inject: Vec<LinkId>,
    eject: Vec<LinkId>,
    /// `local[r * rpg + j]` is the link from router `r` to router `j` of
    /// its group, or `NONE`.
    local: Vec<LinkId>,
    /// `gateways[g * G + h]`: global links from group `g` to group `h`.
    gateways: Vec<Vec<Gateway>>,
    bandwidth: [u64; 3],
}

const NONE: LinkId = LinkId::MAX;

impl Network {
    pub fn build(config: &TopologyConfig) -> Result<Network, NetworkError> {
        config.validate()?;
        let (rows, cols) = config.grid();
        let rpg = rows * cols;
        let g_count = config.num_groups;
        let bandwidth = [
            bytes_per_second(config.terminal_bw_gib),
            bytes_per_second(config.local_bw_gib),
            bytes_per_second(config.global_bw_gib),
        ];
        let mut net = Network {
            config: config.clone(),
            routers: (0..config.num_routers())
                .map(|id| {
                    let i = id % rpg;
                    Router { id, group: id / rpg, row: i / cols, col: i % cols }
                })
                .collect(),
            links: Vec::new(),
            state: Vec::new(),
            inject: Vec::new(),
            eject: Vec::new(),
            local: vec![NONE; (config.num_routers() * rpg) as usize],
            gateways: vec![Vec::new(); (g_count * g_count) as usize],
            bandwidth,
        };

        for n in 0..config.num_nodes() {
            let r = n / config.nodes_per_router;
            let inj = net.add_link(Port::Node(n), Port::Router(r), LinkClass::Terminal);
            let ej = net.add_link(Port::Router(r), Port::Node(n), LinkClass::Terminal);
            net.inject.push(inj);
            net.eject.push(ej);
        }

        for a in 0..config.num_routers() {
            let ra = net.routers[a as usize];
            let group_base = ra.group * rpg;
            for j in 0..rpg {
                let b = group_base + j;
                let rb = net.routers[b as usize];
                let adjacent = a != b
                    && match config.variant {
                        Variant::OneD => true,
                        Variant::TwoD => ra.row == rb.row || ra.col == rb.col,
                    };
                if adjacent {
                    let l = net.add_link(Port::Router(a), Port::Router(b), LinkClass::Local);
                    net.local[(a * rpg + j) as usize] = l;
                }
            }
        }

        if g_count > 1 {
            // endpoints[g][h]: routers of g holding links toward h, in order.
            let gpr = config.global_links_per_router;
            let mut endpoints = vec![vec![Vec::new(); g_count as usize]; g_count as usize];
            for g in 0..g_count {
                for e in 0..rpg * gpr {
                    let h = (g + 1 + e % (g_count - 1)) % g_count;
                    endpoints[g as usize][h as usize].push(g * rpg + e / gpr);
                }
            }
            for g in 0..g_count {
                for h in 0..g_count {
                    if g == h {
                        continue;
                    }
                    let (mine, theirs) = (&endpoints[g as usize][h as usize], &endpoints[h as usize][g as usize]);
                    debug_assert_eq!(mine.len(), theirs.len());
                    for (&a, &b) in mine.iter().zip(theirs) {
                        let link = net.add_link(Port::Router(a), Port::Router(b), LinkClass::Global);
                        net.gateways[(g * g_count + h) as usize].push(Gateway { from: a, to: b, link });
                    }
                }
            }
        }
        Ok(net)
    }

    fn add_link(&mut self, from: Port, to: Port, class: LinkClass) -> LinkId {
        let id = self.links.len() as LinkId;
        let bandwidth = self.bandwidth[class as usize];
        self.links.push(Link { from, to, class, bandwidth });
        self.state.push(LinkState::default());
        id
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    pub fn num_nodes(&self) -> u32 {
        self.inject.len() as u32
    }

    pub fn num_routers(&self) -> u32 {
        self.routers.len() as u32
    }

    pub fn num_groups(&self) -> u32 {
        self.config.num_groups
    }

    pub fn routers_per_group(&self) -> u32 {
        self.config.routers_in_group()
    }

    pub fn nodes_per_group(&self) -> u32 {
        self.routers_per_group() * self.config.nodes_per_router
    }

    pub fn router(&self, r: RouterId) -> Router {
        self.routers[r as usize]
    }

    pub fn router_of(&self, node: NodeId) -> RouterId {
        node / self.config.nodes_per_router
    }

    pub fn group_of_router(&self, r: RouterId) -> u32 {
        r / self.routers_per_group()
    }

    pub fn group_of(&self, node: NodeId) -> u32 {
        self.group_of_router(self.router_of(node))
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, l: LinkId) -> Link {
        self.links[l as usize]
    }

    pub fn link_state(&self, l: LinkId) -> &LinkState {
        &self.state[l as usize]
    }

    pub fn inject_link(&self, node: NodeId) -> LinkId {
        self.inject[node as usize]
    }

    pub fn eject_link(&self, node: NodeId) -> LinkId {
        self.eject[node as usize]
    }

    /// Link from `a` to `b` in the same group, if they are adjacent.
    pub fn local_link(&self, a: RouterId, b: RouterId) -> Option<LinkId> {
        let rpg = self.routers_per_group();
        if a / rpg != b / rpg {
            return None;
        }
        let l = self.local[(a * rpg + b % rpg) as usize];
        (l != NONE).then_some(l)
    }

    pub fn gateways(&self, from_group: u32, to_group: u32) -> &[Gateway] {
        &self.gateways[(from_group * self.num_groups() + to_group) as usize]
    }

    /// Serializes `bytes` onto link `l` once it is free and no earlier than
    /// `ready`. Returns the time the last byte leaves.
    pub fn transmit(&mut self, l: LinkId, ready: u64, bytes: u64) -> u64 {
        let bw = self.links[l as usize].bandwidth;
        let s = &mut self.state[l as usize];
        s.prune(ready);
        let start = ready.max(s.busy_until);
        let finish = start + occupancy_ns(bytes, bw);
        s.busy_until = finish;
        s.total_bytes += bytes;
        s.packets += 1;
        s.in_flight.push_back((finish, bytes));
        s.in_flight_bytes += bytes;
        finish
    }

    /// Bytes accepted by link `l` that are still being serialized at `now`.
    pub fn queued_bytes(&mut self, l: LinkId, now: u64) -> u64 {
        let s = &mut self.state[l as usize];
        s.prune(now);
        s.in_flight_bytes
    }

    /// Cumulative bytes per class over all links, in class order.
    pub fn bytes_by_class(&self) -> [(LinkClass, u64, u32); 3] {
        let mut out = [(LinkClass::Terminal, 0, 0), (LinkClass::Local, 0, 0), (LinkClass::Global, 0, 0)];
        for (link, s) in self.links.iter().zip(&self.state) {
            let e = &mut out[link.class as usize];
            e.1 += s.total_bytes;
            e.2 += 1;
        }
        out
    }

    /// Clears all queues and counters.
    pub fn reset(&mut self) {
        for s in &mut self.state {
            *s = LinkState::default();
        }
    }

    /// Link ids leading out of router `r` to other routers.
    pub fn router_links(&self, r: RouterId) -> impl Iterator<Item = LinkId> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.from == Port::Router(r) && matches!(l.to, Port::Router(_)))
            .map(|(i, _)| i as LinkId)
    }

    /// Idle-network latency of a single `bytes`-sized packet crossing
    /// `links` (including both terminal links): every link costs its
    /// serialization plus the link latency, every router the router delay.
    pub fn idle_latency(&self, links: &[LinkId], bytes: u64) -> u64 {
        let c = &self.config;
        let wire: u64 = links.iter().map(|&l| occupancy_ns(bytes, self.link(l).bandwidth) + c.link_latency_ns).sum();
        wire + (links.len() as u64 - 1) * c.router_delay_ns
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mini_1d_consecutive_arrangement() {
        let net = Network::build(&TopologyConfig::mini_1d()).unwrap();
        assert_eq!((net.num_nodes(), net.num_routers()), (24, 12));
        // group 0 routers 0..4 with one port each: 0->g1, 1->g2, 2->g1, 3->g2
        let to_g1: Vec<_> = net.gateways(0, 1).iter().map(|g| (g.from, g.to)).collect();
        assert_eq!(to_g1, vec![(0, 5), (2, 7)]);
        let to_g2: Vec<_> = net.gateways(0, 2).iter().map(|g| (g.from, g.to)).collect();
        // group 2 endpoints: 8->g0, 9->g1, 10->g0, 11->g1
        assert_eq!(to_g2, vec![(1, 8), (3, 10)]);
        for g in 0..3 {
            for h in 0..3 {
                if g != h {
                    assert_eq!(net.gateways(g, h).len(), 2);
                }
            }
        }
    }

    #[test]
    fn links_are_symmetric() {
        for cfg in [TopologyConfig::mini_1d(), TopologyConfig::mini_2d(), TopologyConfig::system_2d()] {
            let net = Network::build(&cfg).unwrap();
            let mut set = std::collections::HashMap::new();
            for l in net.links() {
                *set.entry((format!("{:?}", l.from), format!("{:?}", l.to), l.class)).or_insert(0) += 1;
            }
            for l in net.links() {
                let back = (format!("{:?}", l.to), format!("{:?}", l.from), l.class);
                assert!(set.contains_key(&back), "{l:?}");
            }
        }
    }

    #[test]
    fn two_d_local_degree() {
        let net = Network::build(&TopologyConfig::system_2d()).unwrap();
        let degree = net.router_links(100).filter(|&l| net.link(l).class == LinkClass::Local).count();
        assert_eq!(degree, 15 + 5);
        let globals = net.router_links(100).filter(|&l| net.link(l).class == LinkClass::Global).count();
        assert_eq!(globals, 7);
    }

    #[test]
    fn fifo_queue_serializes() {
        let mut net = Network::build(&TopologyConfig::mini_1d()).unwrap();
        let l = net.inject_link(0);
        let f1 = net.transmit(l, 0, 4096);
        let f2 = net.transmit(l, 0, 4096);
        assert_eq!((f1, f2), (239, 478));
        assert_eq!(net.queued_bytes(l, 0), 8192);
        assert_eq!(net.queued_bytes(l, 239), 4096);
        assert_eq!(net.queued_bytes(l, 478), 0);
        assert_eq!(net.link_state(l).total_bytes, 8192);
    }
}
