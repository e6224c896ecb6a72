use serde::{Deserialize, Serialize};

use super::NetworkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "1d", alias = "oneD")]
    OneD,
    #[serde(rename = "2d", alias = "twoD")]
    TwoD,
}

/// Shape and timing of a dragonfly system. Bandwidths are in GiB/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub variant: Variant,
    pub num_groups: u32,
    /// 1D only; 2D groups have `rows * cols` routers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routers_per_group: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<u32>,
    pub nodes_per_router: u32,
    pub global_links_per_router: u32,
    #[serde(default = "default_radix")]
    pub radix: u32,
    #[serde(default = "default_terminal_bw")]
    pub terminal_bw_gib: f64,
    #[serde(default = "default_local_bw")]
    pub local_bw_gib: f64,
    #[serde(default = "default_global_bw")]
    pub global_bw_gib: f64,
    #[serde(default = "default_link_latency")]
    pub link_latency_ns: u64,
    #[serde(default = "default_router_delay")]
    pub router_delay_ns: u64,
    #[serde(default = "default_packet_size")]
    pub packet_size: u64,
}

fn default_radix() -> u32 {
    48
}
fn default_link_latency() -> u64 {
    100
}
fn default_router_delay() -> u64 {
    50
}
fn default_packet_size() -> u64 {
    4096
}
fn default_terminal_bw() -> f64 {
    TERMINAL_BW_GIB
}
fn default_local_bw() -> f64 {
    LOCAL_BW_GIB
}
fn default_global_bw() -> f64 {
    GLOBAL_BW_GIB
}

pub const TERMINAL_BW_GIB: f64 = 16.0;
pub const LOCAL_BW_GIB: f64 = 4.69;
pub const GLOBAL_BW_GIB: f64 = 5.25;

impl TopologyConfig {
    fn base(variant: Variant, num_groups: u32, nodes_per_router: u32, global_links_per_router: u32) -> Self {
        TopologyConfig {
            variant,
            num_groups,
            routers_per_group: None,
            rows: None,
            cols: None,
            nodes_per_router,
            global_links_per_router,
            radix: default_radix(),
            terminal_bw_gib: TERMINAL_BW_GIB,
            local_bw_gib: LOCAL_BW_GIB,
            global_bw_gib: GLOBAL_BW_GIB,
            link_latency_ns: default_link_latency(),
            router_delay_ns: default_router_delay(),
            packet_size: default_packet_size(),
        }
    }

    pub fn one_d(num_groups: u32, routers_per_group: u32, nodes_per_router: u32, global_links_per_router: u32) -> Self {
        TopologyConfig {
            routers_per_group: Some(routers_per_group),
            ..Self::base(Variant::OneD, num_groups, nodes_per_router, global_links_per_router)
        }
    }

    pub fn two_d(num_groups: u32, rows: u32, cols: u32, nodes_per_router: u32, global_links_per_router: u32) -> Self {
        TopologyConfig {
            rows: Some(rows),
            cols: Some(cols),
            ..Self::base(Variant::TwoD, num_groups, nodes_per_router, global_links_per_router)
        }
    }

    /// The full-size 1D system: 33 groups of 32 routers, 8448 nodes.
    pub fn system_1d() -> Self {
        Self::one_d(33, 32, 8, 4)
    }

    /// The full-size 2D system: 22 groups of 6x16 routers, 8448 nodes.
    pub fn system_2d() -> Self {
        Self::two_d(22, 6, 16, 4, 7)
    }

    /// 3 groups of 4 routers, 2 nodes each: 24 nodes.
    pub fn mini_1d() -> Self {
        Self::one_d(3, 4, 2, 1)
    }

    /// 2 groups of 2x3 routers, 2 nodes each: 24 nodes.
    pub fn mini_2d() -> Self {
        Self::two_d(2, 2, 3, 2, 1)
    }

    /// (rows, cols) of a group's router grid; 1D groups are one row.
    pub fn grid(&self) -> (u32, u32) {
        match self.variant {
            Variant::OneD => (1, self.routers_per_group.unwrap_or(0)),
            Variant::TwoD => (self.rows.unwrap_or(0), self.cols.unwrap_or(0)),
        }
    }

    pub fn routers_in_group(&self) -> u32 {
        let (r, c) = self.grid();
        r * c
    }

    pub fn num_routers(&self) -> u32 {
        self.num_groups * self.routers_in_group()
    }

    pub fn num_nodes(&self) -> u32 {
        self.num_routers() * self.nodes_per_router
    }

    pub fn local_ports(&self) -> u32 {
        let (r, c) = self.grid();
        match self.variant {
            Variant::OneD => c.saturating_sub(1),
            Variant::TwoD => (c - 1) + (r - 1),
        }
    }

    /// Global endpoints per group.
    pub fn global_endpoints(&self) -> u32 {
        self.routers_in_group() * self.global_links_per_router
    }

    /// Global links joining each pair of groups.
    pub fn links_per_group_pair(&self) -> u32 {
        if self.num_groups < 2 { 0 } else { self.global_endpoints() / (self.num_groups - 1) }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |reason: String| Err(NetworkError::InvalidConfig(reason));
        match self.variant {
            Variant::OneD => {
                if self.routers_per_group.is_none() {
                    return bad("1d topology needs routers_per_group".into());
                }
                if self.rows.is_some() || self.cols.is_some() {
                    return bad("rows/cols apply only to 2d topologies".into());
                }
            }
            Variant::TwoD => {
                if self.rows.is_none() || self.cols.is_none() {
                    return bad("2d topology needs rows and cols".into());
                }
                if self.routers_per_group.is_some_and(|n| Some(n) != self.rows.zip(self.cols).map(|(r, c)| r * c)) {
                    return bad("routers_per_group must equal rows * cols".into());
                }
            }
        }
        if self.num_groups == 0 || self.routers_in_group() == 0 || self.nodes_per_router == 0 {
            return bad("group, router and node counts must be positive".into());
        }
        for (name, v) in [
            ("terminal_bw_gib", self.terminal_bw_gib),
            ("local_bw_gib", self.local_bw_gib),
            ("global_bw_gib", self.global_bw_gib),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be a positive number"));
            }
        }
        if self.packet_size == 0 {
            return bad("packet_size must be positive".into());
        }
        let ports = self.nodes_per_router + self.local_ports() + self.global_links_per_router;
        if ports > self.radix {
            return bad(format!("router needs {ports} ports but radix is {}", self.radix));
        }
        if self.num_groups > 1 {
            let e = self.global_endpoints();
            if self.num_groups > e + 1 {
                return bad(format!("{} groups cannot be connected by {e} global endpoints per group", self.num_groups));
            }
            if !e.is_multiple_of(self.num_groups - 1) {
                return bad(format!(
                    "{e} global endpoints per group do not divide evenly over {} other groups",
                    self.num_groups - 1
                ));
            }
        }
        Ok(())
    }
}

/// GiB/s to bytes per second, rounded to the nearest byte.
pub fn bytes_per_second(gib: f64) -> u64 {
    (gib * (1u64 << 30) as f64).round() as u64
}

/// Nanoseconds to serialize `bytes` at `bw` bytes per second, rounded up.
pub fn occupancy_ns(bytes: u64, bw: u64) -> u64 {
    (bytes as u128 * 1_000_000_000).div_ceil(bw as u128) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_sizes() {
        let a = TopologyConfig::system_1d();
        a.validate().unwrap();
        assert_eq!((a.num_nodes(), a.num_routers(), a.global_endpoints(), a.links_per_group_pair()), (8448, 1056, 128, 4));
        let b = TopologyConfig::system_2d();
        b.validate().unwrap();
        assert_eq!((b.num_nodes(), b.num_routers(), b.global_endpoints(), b.links_per_group_pair()), (8448, 2112, 672, 32));
        let m = TopologyConfig::mini_1d();
        assert_eq!((m.num_nodes(), m.num_routers(), m.links_per_group_pair()), (24, 12, 2));
        assert_eq!(TopologyConfig::mini_2d().num_nodes(), 24);
    }

    #[test]
    fn occupancy_rounds_up() {
        assert_eq!(occupancy_ns(4096, bytes_per_second(16.0)), 239);
        assert_eq!(occupancy_ns(1, 1_000_000_000), 1);
        assert_eq!(occupancy_ns(0, 7), 0);
    }

    #[test]
    fn invalid_configs() {
        let mut c = TopologyConfig::mini_1d();
        c.global_links_per_router = 0;
        assert!(c.validate().is_err());
        let mut c = TopologyConfig::system_1d();
        c.radix = 40;
        assert!(c.validate().is_err());
        let mut c = TopologyConfig::mini_1d();
        c.num_groups = 4;
        assert!(c.validate().is_err(), "4 endpoints over 3 groups");
        let json = serde_json::to_string(&TopologyConfig::mini_2d()).unwrap();
        let back: TopologyConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, TopologyConfig::mini_2d());
    }
}
