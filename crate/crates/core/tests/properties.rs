use std::collections::{BTreeMap, BTreeSet};

use dfsim::metrics::{quantile, BoxStats};
use dfsim::network::TopologyConfig;
use dfsim::placement::{place, Policy};
use dfsim::rng::{stream, Stream};
use dfsim::workloads::{dims_create, find};
use dfsim::{audit, Binding, Network};
use proptest::prelude::*;

fn policy() -> impl Strategy<Value = Policy> {
    prop_oneof![Just(Policy::Rn), Just(Policy::Rr), Just(Policy::Rg)]
}

fn topology() -> impl Strategy<Value = TopologyConfig> {
    prop_oneof![
        Just(TopologyConfig::mini_1d()),
        Just(TopologyConfig::mini_2d()),
        Just(TopologyConfig::one_d(5, 4, 3, 1)),
    ]
}

proptest! {
    #[test]
    fn placements_are_disjoint_and_pure(
        cfg in topology(),
        policy in policy(),
        sizes in prop::collection::vec(1u32..12, 1..6),
        seed in any::<u64>(),
    ) {
        let net = Network::build(&cfg).unwrap();
        let jobs: Vec<(String, u32)> = sizes.iter().enumerate().map(|(i, &n)| (format!("j{i}"), n)).collect();
        let total: u32 = sizes.iter().sum();
        let result = place(policy, &jobs, &net, &mut stream(seed, Stream::Placement));
        if total > net.num_nodes() {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let p = result.unwrap();
        let mut owner = BTreeMap::new();
        for (j, map) in p.maps.iter().enumerate() {
            prop_assert_eq!(map.len() as u32, sizes[j]);
            for &node in map {
                prop_assert!(node < net.num_nodes());
                prop_assert!(owner.insert(node, j).is_none(), "node {} assigned twice", node);
            }
        }
        if policy != Policy::Rn && p.fallbacks.is_empty() {
            let mut router_jobs: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
            for (&node, &j) in &owner {
                router_jobs.entry(net.router_of(node)).or_default().insert(j);
            }
            prop_assert!(router_jobs.values().all(|s| s.len() == 1), "router shared without fallback");
        }
        if policy == Policy::Rg && p.fallbacks.is_empty() {
            for (j, map) in p.maps.iter().enumerate() {
                let groups: BTreeSet<_> = map.iter().map(|&n| net.group_of(n)).collect();
                prop_assert!(groups.len() as u32 <= sizes[j].div_ceil(net.nodes_per_group()));
            }
        }
        let again = place(policy, &jobs, &net, &mut stream(seed, Stream::Placement)).unwrap();
        prop_assert_eq!(again, p);
    }

    #[test]
    fn quartiles_match_sort_oracle(values in prop::collection::vec(-1e6f64..1e6, 1..60)) {
        let b = BoxStats::of(&values).unwrap();
        let mut v = values.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        let oracle = |q: f64| {
            let h = (n - 1) as f64 * q;
            let k = h as usize;
            if k + 1 < n { v[k] + (h - k as f64) * (v[k + 1] - v[k]) } else { v[k] }
        };
        prop_assert_eq!(b.min, v[0]);
        prop_assert_eq!(b.max, v[n - 1]);
        for (got, q) in [(b.q1, 0.25), (b.median, 0.5), (b.q3, 0.75)] {
            prop_assert!((got - oracle(q)).abs() <= 1e-9 * (1.0 + oracle(q).abs()));
        }
        prop_assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
        prop_assert!(b.min <= b.mean && b.mean <= b.max);
        prop_assert_eq!(quantile(&v, 0.0), v[0]);
    }

    #[test]
    fn dims_multiply_back(n in 1u32..5000, d in 1usize..5) {
        let dims = dims_create(n, d);
        prop_assert_eq!(dims.len(), d);
        prop_assert_eq!(dims.iter().product::<u32>(), n);
        prop_assert!(dims.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn nn3d_bytes_scale_with_grid(x in 3i64..6, y in 3i64..6, z in 3i64..5, iters in 1i64..4) {
        let params: Binding = [("x", x), ("y", y), ("z", z), ("iters", iters)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let r = audit(&find("nn3d").unwrap().instantiate(Some((x * y * z) as u32), &params, 0).unwrap()).unwrap();
        prop_assert!(r.bytes.iter().all(|&b| b == (iters * 6 * 131_072) as u64));
        prop_assert_eq!(r.counts.send, (x * y * z * iters * 6) as u64);
    }

    #[test]
    fn cosmoflow_and_ur_scale_linearly(n in 2u32..40, iters in 1i64..5, periods in 1i64..6) {
        let iters_b: Binding = [("iters".to_string(), iters)].into();
        let r = audit(&find("cosmoflow").unwrap().instantiate(Some(n), &iters_b, 0).unwrap()).unwrap();
        prop_assert_eq!(r.counts.allreduce, iters as u64);
        prop_assert!(r.bytes.iter().all(|&b| b == iters as u64 * 29_517_414));
        let ur_b: Binding = [("duration".to_string(), periods * 1000)].into();
        let r = audit(&find("ur").unwrap().instantiate(Some(n), &ur_b, 3).unwrap()).unwrap();
        prop_assert_eq!(r.counts.send, n as u64 * periods as u64);
        prop_assert!(r.bytes.iter().all(|&b| b == periods as u64 * 10_240));
    }

    #[test]
    fn milc_sends_six_mesh_and_two_lattice_messages(w in 2u32..4, iters in 1i64..3) {
        let params: Binding = [("x", 3), ("y", 3), ("z", 3), ("iters", iters)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let r = audit(&find("milc").unwrap().instantiate(Some(27 * w), &params, 0).unwrap()).unwrap();
        prop_assert!(r.bytes.iter().all(|&b| b == iters as u64 * 8 * 497_664));
    }
}

#[test]
fn shipped_defaults_carry_the_reference_sizes() {
    let bytes = |name: &str, key: &str| {
        let v = find(name).unwrap().validate(None, &Binding::new(), 0).unwrap();
        v.binding[key]
    };
    assert_eq!(bytes("cosmoflow", "msgsize"), 29_517_414, "28.15 MiB");
    assert_eq!(bytes("nn3d", "msgsize"), 128 * 1024);
    assert_eq!(bytes("milc", "msgsize"), 486 * 1024);
    assert_eq!(bytes("nekbone", "facesize"), 165 * 1024);
    assert_eq!(bytes("lammps", "ghostsize"), 135 * 1024);
    assert_eq!(bytes("ur", "msgsize"), 10 * 1024);
    assert_eq!(bytes("ur", "interval"), 1000);
    assert_eq!(bytes("cosmoflow", "interval"), 129_000);
    for (name, ranks) in [("cosmoflow", 1024), ("alexnet", 512), ("nn3d", 512), ("milc", 4096), ("nekbone", 2197), ("lammps", 2048), ("ur", 4096)] {
        assert_eq!(find(name).unwrap().default_ranks, ranks, "{name}");
    }
}
