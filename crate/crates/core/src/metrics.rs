//! Run metrics: message latency, communication time, router window
//! counters and link loads, with their CSV exports.
//!
//! Latency boxes are computed over the population of per-rank maximum
//! latencies, with quartiles by linear interpolation between order
//! statistics. Router windows are half-open: a packet at time `t` falls in
//! window `t / window_ns`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::network::{LinkClass, RouterId};

pub const DEFAULT_WINDOW_NS: u64 = 500_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LatencyStats {
    pub count: u64,
    pub min: u64,
    pub max: u64,
    pub sum: u128,
}

impl LatencyStats {
    pub fn record(&mut self, ns: u64) {
        if self.count == 0 {
            self.min = ns;
            self.max = ns;
        } else {
            self.min = self.min.min(ns);
            self.max = self.max.max(ns);
        }
        self.count += 1;
        self.sum += ns as u128;
    }

    pub fn avg(&self) -> f64 {
        if self.count == 0 { 0.0 } else { self.sum as f64 / self.count as f64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankMetrics {
    pub node: u32,
    pub latency: LatencyStats,
    pub comm_ns: u64,
    /// Local clock when the rank finished (or the end time).
    pub total_ns: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Conservation {
    pub messages_injected: u64,
    pub messages_delivered: u64,
    pub messages_consumed: u64,
    pub packets_injected: u64,
    pub packets_delivered: u64,
    /// Largest router-to-router hop count of a delivered packet, minimal
    /// and nonminimal routes separately.
    pub max_hops_minimal: u32,
    pub max_hops_nonminimal: u32,
    pub nonminimal_packets: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub rank: u32,
    pub label: String,
    /// `median`, `mean`, `minimum`, `maximum`, or `none` for plain values.
    pub aggregate: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppMetrics {
    pub label: String,
    pub ranks: Vec<RankMetrics>,
    pub totals: Conservation,
    pub logs: Vec<LogRecord>,
    /// Routers hosting at least one of this app's nodes.
    pub routers: BTreeSet<RouterId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsStore {
    pub window_ns: u64,
    pub end_time: u64,
    pub apps: Vec<AppMetrics>,
    windows: HashMap<(RouterId, u32), Vec<[u64; 2]>>,
    /// (class, total bytes, number of links).
    pub link_load: Vec<(LinkClass, u64, u32)>,
}

impl MetricsStore {
    pub fn new(window_ns: u64, apps: Vec<AppMetrics>) -> Self {
        assert!(window_ns > 0, "window length must be positive");
        MetricsStore { window_ns, apps, ..Default::default() }
    }

    pub fn record_delivery(&mut self, app: u32, rank: u32, latency_ns: u64) {
        self.apps[app as usize].ranks[rank as usize].latency.record(latency_ns);
    }

    pub fn record_router_packet(&mut self, router: RouterId, app: u32, t: u64, bytes: u64) {
        let w = (t / self.window_ns) as usize;
        let series = self.windows.entry((router, app)).or_default();
        if series.len() <= w {
            series.resize(w + 1, [0, 0]);
        }
        series[w][0] += 1;
        series[w][1] += bytes;
    }

    /// Window series of (router, app), densified up to the end time.
    pub fn window_series(&self, router: RouterId, app: u32) -> Vec<[u64; 2]> {
        let mut s = self.windows.get(&(router, app)).cloned().unwrap_or_default();
        s.resize(self.last_window() as usize + 1, [0, 0]);
        s
    }

    pub fn last_window(&self) -> u64 {
        self.end_time / self.window_ns
    }

    /// (router, app) pairs that saw traffic, sorted.
    pub fn window_keys(&self) -> Vec<(RouterId, u32)> {
        let mut k: Vec<_> = self.windows.keys().copied().collect();
        k.sort_unstable();
        k
    }

    /// Total (packets, bytes) received by `router` for `app`.
    pub fn router_totals(&self, router: RouterId, app: u32) -> (u64, u64) {
        self.windows.get(&(router, app)).map_or((0, 0), |s| {
            s.iter().fold((0, 0), |(p, b), w| (p + w[0], b + w[1]))
        })
    }

    /// Bytes of other applications' packets passing through the routers
    /// that host `app`.
    pub fn cross_app_bytes(&self, app: u32) -> u64 {
        let routers = &self.apps[app as usize].routers;
        self.windows
            .iter()
            .filter(|((r, a), _)| *a != app && routers.contains(r))
            .map(|(_, s)| s.iter().map(|w| w[1]).sum::<u64>())
            .sum()
    }

    pub fn link_bytes(&self, class: LinkClass) -> u64 {
        self.link_load.iter().find(|e| e.0 == class).map_or(0, |e| e.1)
    }

    /// Global over global plus local bytes.
    pub fn global_fraction(&self) -> f64 {
        let (g, l) = (self.link_bytes(LinkClass::Global), self.link_bytes(LinkClass::Local));
        if g + l == 0 { 0.0 } else { g as f64 / (g + l) as f64 }
    }

    pub fn summarize(&self) -> Summary {
        let apps = self
            .apps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let maxes: Vec<f64> =
                    a.ranks.iter().filter(|r| r.latency.count > 0).map(|r| r.latency.max as f64).collect();
                AppSummary {
                    label: a.label.clone(),
                    latency_box: BoxStats::of(&maxes),
                    max_comm_ns: a.ranks.iter().map(|r| r.comm_ns).max().unwrap_or(0),
                    cross_app_bytes: self.cross_app_bytes(i as u32),
                    totals: a.totals,
                }
            })
            .collect();
        let total: u64 = self.link_load.iter().map(|e| e.1).sum();
        Summary {
            end_time_ns: self.end_time,
            apps,
            global_bytes: self.link_bytes(LinkClass::Global),
            local_bytes: self.link_bytes(LinkClass::Local),
            terminal_bytes: self.link_bytes(LinkClass::Terminal),
            total_link_bytes: total,
            global_fraction: self.global_fraction(),
        }
    }

    /// `app,min,q1,median,q3,max,mean` over per-rank maximum latency (ns).
    pub fn latency_box_csv(&self) -> String {
        let mut out = String::from("app,min,q1,median,q3,max,mean\n");
        for a in self.summarize().apps {
            match a.latency_box {
                Some(b) => writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    a.label,
                    fmt_f(b.min),
                    fmt_f(b.q1),
                    fmt_f(b.median),
                    fmt_f(b.q3),
                    fmt_f(b.max),
                    fmt_f(b.mean)
                ),
                None => writeln!(out, "{},,,,,,", a.label),
            }
            .unwrap();
        }
        out
    }

    pub fn comm_time_csv(&self) -> String {
        let mut out = String::from("app,rank,comm_ns,total_ns\n");
        for a in &self.apps {
            for (r, m) in a.ranks.iter().enumerate() {
                writeln!(out, "{},{r},{},{}", a.label, m.comm_ns, m.total_ns).unwrap();
            }
        }
        out
    }

    /// Dense `router,app,window,packets,bytes` rows for every (router, app)
    /// pair with traffic, windows 0 through the end time's window.
    pub fn router_windows_csv(&self) -> String {
        let mut out = String::from("router,app,window,packets,bytes\n");
        for (r, a) in self.window_keys() {
            let label = &self.apps[a as usize].label;
            for (w, [p, b]) in self.window_series(r, a).iter().enumerate() {
                writeln!(out, "{r},{label},{w},{p},{b}").unwrap();
            }
        }
        out
    }

    pub fn link_load_csv(&self) -> String {
        let mut out = String::from("link_class,total_bytes,num_links,bytes_per_link\n");
        for class in [LinkClass::Global, LinkClass::Local, LinkClass::Terminal] {
            let (_, bytes, n) = self.link_load.iter().copied().find(|e| e.0 == class).unwrap_or((class, 0, 0));
            let per = if n == 0 { 0.0 } else { bytes as f64 / n as f64 };
            writeln!(out, "{},{bytes},{n},{}", class.name(), fmt_f(per)).unwrap();
        }
        out
    }

    /// `app,rank,label,aggregate,value` for every logged value.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("app,rank,label,aggregate,value\n");
        for a in &self.apps {
            for l in &a.logs {
                writeln!(out, "{},{},{},{},{}", a.label, l.rank, csv_field(&l.label), l.aggregate, fmt_f(l.value))
                    .unwrap();
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() }
}

/// Shortest decimal that round-trips.
fn fmt_f(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 { format!("{}", v as i64) } else { format!("{v}") }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(BoxStats {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

/// Linear interpolation between closest ranks of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppSummary {
    pub label: String,
    pub latency_box: Option<BoxStats>,
    pub max_comm_ns: u64,
    pub cross_app_bytes: u64,
    pub totals: Conservation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub end_time_ns: u64,
    pub apps: Vec<AppSummary>,
    pub global_bytes: u64,
    pub local_bytes: u64,
    pub terminal_bytes: u64,
    pub total_link_bytes: u64,
    pub global_fraction: f64,
}

/// Aggregates `values` the way a log statement asks.
pub fn aggregate(name: &str, values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match name {
        "median" => quantile(&v, 0.5),
        "mean" => v.iter().sum::<f64>() / v.len() as f64,
        "minimum" => v[0],
        "maximum" => v[v.len() - 1],
        _ => *values.last().expect("non-empty"),
    }
}

/// Groups trace-derived blocked intervals by rank for cross-checking.
pub fn blocked_time_from_trace<'a>(
    lines: impl IntoIterator<Item = &'a str>,
) -> BTreeMap<(String, u32), u64> {
    let mut open: HashMap<(String, u32), u64> = HashMap::new();
    let mut total = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.splitn(6, ',').collect();
        if f.len() < 5 {
            continue;
        }
        let (Ok(t), Ok(rank)) = (f[0].parse::<u64>(), f[4].parse::<u32>()) else { continue };
        let key = (f[3].to_string(), rank);
        match f[2] {
            "block" => {
                open.insert(key, t);
            }
            "unblock" => {
                if let Some(start) = open.remove(&key) {
                    *total.entry(key).or_insert(0) += t - start;
                }
            }
            _ => {}
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(ranks: usize) -> MetricsStore {
        MetricsStore::new(
            DEFAULT_WINDOW_NS,
            vec![AppMetrics { label: "a".into(), ranks: vec![RankMetrics::default(); ranks], ..Default::default() }],
        )
    }

    #[test]
    fn latency_stats() {
        let mut s = store(2);
        s.record_delivery(0, 0, 500);
        let l = s.apps[0].ranks[0].latency;
        assert_eq!((l.min, l.max, l.avg()), (500, 500, 500.0));
        s.record_delivery(0, 1, 100);
        s.record_delivery(0, 1, 300);
        let l = s.apps[0].ranks[1].latency;
        assert_eq!((l.min, l.max, l.avg()), (100, 300, 200.0));
    }

    #[test]
    fn windows_are_half_open() {
        let mut s = store(1);
        s.record_router_packet(3, 0, 400_000, 10);
        s.record_router_packet(3, 0, 500_000, 20);
        s.end_time = 1_200_000;
        assert_eq!(s.window_series(3, 0), vec![[1, 10], [1, 20], [0, 0]]);
        assert_eq!(s.router_totals(3, 0), (2, 30));
        assert_eq!(s.router_windows_csv().lines().count(), 4);
    }

    #[test]
    fn quantiles_interpolate() {
        let b = BoxStats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max, b.mean), (1.0, 1.75, 2.5, 3.25, 4.0, 2.5));
        assert_eq!(BoxStats::of(&[7.0]).unwrap().q3, 7.0);
        assert!(BoxStats::of(&[]).is_none());
    }

    #[test]
    fn cross_app_bytes_only_count_foreign_traffic() {
        let mut s = MetricsStore::new(
            DEFAULT_WINDOW_NS,
            vec![
                AppMetrics { label: "a".into(), routers: [0].into(), ..Default::default() },
                AppMetrics { label: "b".into(), routers: [1].into(), ..Default::default() },
            ],
        );
        s.record_router_packet(0, 0, 0, 100);
        assert_eq!(s.cross_app_bytes(0), 0);
        s.record_router_packet(0, 1, 0, 7);
        s.record_router_packet(1, 1, 0, 9);
        assert_eq!((s.cross_app_bytes(0), s.cross_app_bytes(1)), (7, 0));
    }

    #[test]
    fn trace_blocked_time() {
        let lines = ["10,1,block,a,0,send", "25,2,unblock,a,0,15", "30,3,block,a,0,recv", "31,4,unblock,a,0,1"];
        let t = blocked_time_from_trace(lines);
        assert_eq!(t[&("a".to_string(), 0)], 16);
    }
}
