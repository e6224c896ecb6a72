//! Minimal and adaptive (UGAL-L) routing.
//!
//! Routes are computed hop by hop from a small per-packet [`Route`] state.
//! Inside a group, 2D packets move along their row first and then along
//! their column. Between groups, a packet picks the global link whose
//! endpoints minimize the local hops on both sides, breaking ties with the
//! routing stream, and keeps that link until it has crossed it.
//!
//! Adaptive routing decides once, at the source router, between the minimal
//! path and a detour through a random intermediate router. Each candidate
//! costs its hop count times the bytes still queued on its first output
//! link. The detour is taken only if strictly cheaper.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gateway, LinkId, Network, RouterId, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    #[serde(alias = "minimal")]
    Min,
    #[serde(alias = "adp", alias = "ugal")]
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteClass {
    #[default]
    Minimal,
    Nonminimal,
}

/// Per-packet routing state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub dst: RouterId,
    /// Intermediate router still to be visited.
    pub via: Option<RouterId>,
    /// Global link chosen for the current segment, not yet crossed.
    gateway: Option<Gateway>,
    pub class: RouteClass,
}

impl Route {
    pub fn minimal(dst: RouterId) -> Route {
        Route { dst, via: None, gateway: None, class: RouteClass::Minimal }
    }

    pub fn through(via: RouterId, dst: RouterId) -> Route {
        Route { dst, via: Some(via), gateway: None, class: RouteClass::Nonminimal }
    }
}

impl Network {
    /// Router-to-router hops between two routers of one group.
    pub fn local_dist(&self, a: RouterId, b: RouterId) -> u32 {
        if a == b {
            return 0;
        }
        match self.config.variant {
            Variant::OneD => 1,
            Variant::TwoD => {
                let (ra, rb) = (self.router(a), self.router(b));
                (ra.row != rb.row) as u32 + (ra.col != rb.col) as u32
            }
        }
    }

    /// Next router from `a` toward `b` in the same group, row first.
    fn local_step(&self, a: RouterId, b: RouterId) -> RouterId {
        match self.config.variant {
            Variant::OneD => b,
            Variant::TwoD => {
                let (ra, rb) = (self.router(a), self.router(b));
                if ra.col != rb.col && ra.row != rb.row {
                    ra.group * self.routers_per_group() + ra.row * self.config.grid().1 + rb.col
                } else {
                    b
                }
            }
        }
    }

    fn gateway_cost(&self, from: RouterId, gw: &Gateway, to: RouterId) -> u32 {
        self.local_dist(from, gw.from) + 1 + self.local_dist(gw.to, to)
    }

    /// Minimal router-to-router hop count.
    pub fn min_hops(&self, a: RouterId, b: RouterId) -> u32 {
        let (ga, gb) = (self.group_of_router(a), self.group_of_router(b));
        if ga == gb {
            return self.local_dist(a, b);
        }
        self.gateways(ga, gb).iter().map(|gw| self.gateway_cost(a, gw, b)).min().expect("groups are connected")
    }

    fn choose_gateway(&self, from: RouterId, to: RouterId, rng: &mut impl Rng) -> Gateway {
        let (gf, gt) = (self.group_of_router(from), self.group_of_router(to));
        let candidates = self.gateways(gf, gt);
        let best = candidates.iter().map(|gw| self.gateway_cost(from, gw, to)).min().expect("groups are connected");
        let ties: Vec<&Gateway> = candidates.iter().filter(|gw| self.gateway_cost(from, gw, to) == best).collect();
        *ties[if ties.len() > 1 { rng.random_range(0..ties.len()) } else { 0 }]
    }

    /// Output link at router `cur` for a packet following `route`, or
    /// `None` when `cur` is the destination router.
    pub fn next_link(&self, route: &mut Route, cur: RouterId, rng: &mut impl Rng) -> Option<LinkId> {
        if route.via == Some(cur) {
            route.via = None;
            route.gateway = None;
        }
        let target = route.via.unwrap_or(route.dst);
        if cur == target {
            return None;
        }
        if self.group_of_router(cur) == self.group_of_router(target) {
            let next = self.local_step(cur, target);
            return Some(self.local_link(cur, next).expect("row/column neighbour"));
        }
        let gw = match route.gateway {
            Some(gw) => gw,
            None => {
                let gw = self.choose_gateway(cur, target, rng);
                route.gateway = Some(gw);
                gw
            }
        };
        if cur == gw.from {
            route.gateway = None;
            Some(gw.link)
        } else {
            let next = self.local_step(cur, gw.from);
            Some(self.local_link(cur, next).expect("row/column neighbour"))
        }
    }

    /// Router-to-router links of a minimal path from `src` to `dst`.
    pub fn minimal_route(&self, src: RouterId, dst: RouterId, rng: &mut impl Rng) -> Vec<LinkId> {
        self.follow(Route::minimal(dst), src, rng)
    }

    /// Links visited by `route` starting at `src`.
    pub fn follow(&self, mut route: Route, src: RouterId, rng: &mut impl Rng) -> Vec<LinkId> {
        let mut path = Vec::new();
        let mut cur = src;
        while let Some(l) = self.next_link(&mut route, cur, rng) {
            path.push(l);
            let super::Port::Router(next) = self.link(l).to else { unreachable!() };
            cur = next;
        }
        path
    }

    /// UGAL-L choice at the source router `src` at time `now`. Returns the
    /// committed route and its first output link (`None` if `src == dst`).
    pub fn adaptive_route(
        &mut self,
        src: RouterId,
        dst: RouterId,
        now: u64,
        rng: &mut impl Rng,
    ) -> (Route, Option<LinkId>) {
        let mut min = Route::minimal(dst);
        let Some(min_port) = self.next_link(&mut min, src, rng) else {
            return (min, None);
        };
        let Some(via) = self.intermediate(src, dst, rng) else {
            return (min, Some(min_port));
        };
        let mut detour = Route::through(via, dst);
        let detour_port = self.next_link(&mut detour, src, rng).expect("intermediate is remote");
        let min_cost = self.min_hops(src, dst) as u128 * self.queued_bytes(min_port, now) as u128;
        let detour_hops = self.min_hops(src, via) + self.min_hops(via, dst);
        let detour_cost = detour_hops as u128 * self.queued_bytes(detour_port, now) as u128;
        if detour_cost < min_cost {
            (detour, Some(detour_port))
        } else {
            (min, Some(min_port))
        }
    }

    /// A uniformly random router in a random group other than the source
    /// group, and other than the destination group when possible.
    fn intermediate(&self, src: RouterId, dst: RouterId, rng: &mut impl Rng) -> Option<RouterId> {
        let (gs, gd) = (self.group_of_router(src), self.group_of_router(dst));
        let mut groups: Vec<u32> = (0..self.num_groups()).filter(|&g| g != gs && g != gd).collect();
        if groups.is_empty() {
            groups = (0..self.num_groups()).filter(|&g| g != gs).collect();
        }
        if groups.is_empty() {
            return None;
        }
        let g = groups[rng.random_range(0..groups.len())];
        Some(g * self.routers_per_group() + rng.random_range(0..self.routers_per_group()))
    }
}
