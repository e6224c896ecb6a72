//! The shipped workload skeletons.
//!
//! Each workload is a DSL program under `workloads/`, compiled into the
//! binary. Grid-shaped workloads take their extents as parameters; when
//! only a rank count is given, the extents are factored from it the way
//! `MPI_Dims_create` does.

use std::sync::Arc;

use crate::dsl::{self, Binding, DslError, ValidatedProgram};
use crate::skeleton::registry::{Instance, SkeletonRegistry};
use crate::skeleton::{skeletonize, SkeletonProgram};

/// How a workload's grid parameters follow from its rank count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    None,
    /// `x`, `y`, `z` with `x * y * z` ranks.
    Three,
    /// Four extents; `x`, `y`, `z` get the three largest, the fourth is
    /// implied by the rank count.
    Four,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub name: &'static str,
    pub source: &'static str,
    pub default_ranks: u32,
    pub grid: Grid,
}

macro_rules! workload {
    ($name:literal, $ranks:expr, $grid:expr) => {
        WorkloadSpec {
            name: $name,
            source: include_str!(concat!("../../../workloads/", $name, ".u")),
            default_ranks: $ranks,
            grid: $grid,
        }
    };
}

pub static WORKLOADS: [WorkloadSpec; 8] = [
    workload!("alexnet", 512, Grid::None),
    workload!("cosmoflow", 1024, Grid::None),
    workload!("lammps", 2048, Grid::Three),
    workload!("milc", 4096, Grid::Four),
    workload!("nekbone", 2197, Grid::Three),
    workload!("nn3d", 512, Grid::Three),
    workload!("pingpong", 2, Grid::None),
    workload!("ur", 4096, Grid::None),
];

pub fn find(name: &str) -> Option<&'static WorkloadSpec> {
    WORKLOADS.iter().find(|w| w.name == name)
}

/// Balanced factorization of `n` into `d` extents, largest first.
pub fn dims_create(n: u32, d: usize) -> Vec<u32> {
    assert!(n > 0 && d > 0);
    let mut primes = Vec::new();
    let mut m = n;
    let mut p = 2;
    while p * p <= m {
        while m.is_multiple_of(p) {
            primes.push(p);
            m /= p;
        }
        p += 1;
    }
    if m > 1 {
        primes.push(m);
    }
    let mut dims = vec![1u32; d];
    for &p in primes.iter().rev() {
        let smallest = (0..d).min_by_key(|&i| dims[i]).unwrap();
        dims[smallest] *= p;
    }
    dims.sort_unstable_by(|a, b| b.cmp(a));
    dims
}

impl WorkloadSpec {
    /// Rank count and parameter overrides after filling in grid extents.
    pub fn resolve(&self, ranks: Option<u32>, params: &Binding) -> (u32, Binding) {
        let n = ranks.unwrap_or(self.default_ranks);
        let mut params = params.clone();
        let extents_given = ["x", "y", "z"].iter().any(|k| params.contains_key(*k));
        if ranks.is_some() && !extents_given {
            let dims = match self.grid {
                Grid::None => Vec::new(),
                Grid::Three => dims_create(n, 3),
                Grid::Four => dims_create(n, 4),
            };
            for (k, v) in ["x", "y", "z"].iter().zip(dims) {
                params.insert(k.to_string(), v as i64);
            }
        }
        (n, params)
    }

    pub fn validate(&self, ranks: Option<u32>, params: &Binding, seed: u64) -> Result<ValidatedProgram, DslError> {
        let (n, params) = self.resolve(ranks, params);
        Ok(dsl::check(&dsl::parse_source(self.source)?, n, &params)?.with_seed(seed))
    }

    pub fn instantiate(&self, ranks: Option<u32>, params: &Binding, seed: u64) -> Result<SkeletonProgram, DslError> {
        let v = self.validate(ranks, params, seed)?;
        skeletonize(self.name, &v).map_err(|crate::skeleton::SkeletonError::Dsl(e)| e)
    }
}

/// A registry holding every shipped workload.
pub fn shipped_registry() -> SkeletonRegistry {
    let mut reg = SkeletonRegistry::new();
    for spec in &WORKLOADS {
        reg.register_constructor(spec.name, Arc::new(|i: &Instance| spec.instantiate(i.ranks, &i.params, i.seed)))
            .expect("workload names are unique");
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::audit;

    fn bind(pairs: &[(&str, i64)]) -> Binding {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn dims_match_default_grids() {
        assert_eq!(dims_create(512, 3), [8, 8, 8]);
        assert_eq!(dims_create(2197, 3), [13, 13, 13]);
        assert_eq!(dims_create(2048, 3), [16, 16, 8]);
        assert_eq!(dims_create(4096, 4), [8, 8, 8, 8]);
        assert_eq!(dims_create(12, 3), [3, 2, 2]);
        assert_eq!(dims_create(7, 3), [7, 1, 1]);
    }

    #[test]
    fn every_workload_parses_at_default_scale() {
        for w in &WORKLOADS {
            let v = w.validate(None, &Binding::new(), 0).unwrap_or_else(|e| panic!("{}: {e}", w.name));
            assert_eq!(v.num_tasks, w.default_ranks, "{}", w.name);
        }
    }

    #[test]
    fn cosmoflow_tiny() {
        let p = find("cosmoflow").unwrap().instantiate(Some(8), &bind(&[("iters", 2)]), 0).unwrap();
        let r = audit(&p).unwrap();
        assert_eq!(r.counts.allreduce, 2);
        assert!(r.bytes.iter().all(|&b| b == 2 * 29_517_414));
    }

    #[test]
    fn nn3d_has_six_neighbours() {
        let p = find("nn3d").unwrap().instantiate(Some(27), &bind(&[("iters", 1)]), 0).unwrap();
        let r = audit(&p).unwrap();
        assert_eq!(r.counts.send, 27 * 6);
        assert!(r.bytes.iter().all(|&b| b == 6 * 131_072));
    }

    #[test]
    fn ur_interval_arithmetic() {
        let p = find("ur").unwrap().instantiate(Some(4), &bind(&[("interval", 1000), ("duration", 3000)]), 5).unwrap();
        let r = audit(&p).unwrap();
        assert_eq!(r.counts.send, 12);
        assert!(r.bytes.iter().all(|&b| b == 3 * 10_240));
    }

    #[test]
    fn grid_mismatch_fails_assertion() {
        let err = find("nn3d").unwrap().instantiate(Some(30), &bind(&[("x", 3), ("y", 3), ("z", 3)]), 0);
        assert!(err.is_err());
    }

    #[test]
    fn registry_builds_small_instances() {
        let reg = shipped_registry();
        assert_eq!(reg.names().count(), 8);
        let i = Instance { ranks: Some(32), params: Binding::new(), seed: 1 };
        assert_eq!(reg.build("milc", &i).unwrap().num_tasks(), 32);
    }
}
