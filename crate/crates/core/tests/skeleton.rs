mod common;

use dfsim::dsl::{check, parse_source, Binding};
use dfsim::skeleton::reference::reference_audit;
use dfsim::skeleton::{skeletonize, SkeletonOp};
use dfsim::{audit, WORKLOADS};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn skeleton_audit_equals_reference((n, src) in common::programs::program(), seed in 0u64..1000) {
        let v = check(&parse_source(&src).unwrap(), n, &Binding::new()).unwrap().with_seed(seed);
        let sk = skeletonize("random", &v).unwrap();
        let a = audit(&sk).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let b = reference_audit("random", &v).unwrap();
        prop_assert_eq!(&a.counts, &b.counts, "{}", src);
        prop_assert_eq!(&a.bytes, &b.bytes, "{}", src);
        prop_assert_eq!(&a.digests, &b.digests, "{}", src);
    }

    #[test]
    fn streams_are_reproducible((n, src) in common::programs::program(), seed in 0u64..1000) {
        let v = check(&parse_source(&src).unwrap(), n, &Binding::new()).unwrap().with_seed(seed);
        let (x, y) = (skeletonize("a", &v).unwrap(), skeletonize("a", &v).unwrap());
        for r in 0..n {
            prop_assert_eq!(x.stream(r), y.stream(r));
        }
    }
}

#[test]
fn streams_carry_sizes_not_payloads() {
    // An operation is a fixed-size record whatever the message size.
    assert!(std::mem::size_of::<SkeletonOp>() <= 40);
    for spec in &WORKLOADS {
        let p = spec.instantiate(None, &Binding::new(), 0).unwrap();
        let s = p.stream(0);
        assert!(matches!(s.last(), Some(SkeletonOp::End)), "{}", spec.name);
    }
}

#[test]
fn alexnet_audit_matches_closed_form_at_any_scale() {
    let spec = dfsim::workloads::find("alexnet").unwrap();
    for n in [2, 3, 17, 64] {
        let r = audit(&spec.instantiate(Some(n), &Binding::new(), 0).unwrap()).unwrap();
        assert_eq!((r.counts.bcast, r.counts.allreduce), (11 + 89 * 22, 89 * 22));
        let root = 89 * 22 * 323_289_070u64;
        assert_eq!(r.bytes[0], root);
        assert!(r.bytes[1..].iter().all(|&b| b == root + 11 * 22_450_000 + 89 * 11 * 29));
    }
}
