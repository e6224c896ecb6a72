//! Seeded randomness.
//!
//! One experiment seed fans out into independent named streams, so drawing
//! more routing decisions never shifts placement draws (and vice versa).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement = 1,
    Routing = 2,
    Workload = 3,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Seed of the workload stream for job `job` of an experiment.
pub fn workload_seed(seed: u64, job: usize) -> u64 {
    let mut rng = stream(seed, Stream::Workload);
    rng.set_word_pos(job as u128 * 16);
    rng.random()
}

/// Draws a task uniformly from `0..num_tasks` excluding `other`.
///
/// The draw is a pure function of its arguments: `site` identifies the
/// statement, `occurrence` how many times it has executed before, so any
/// interpreter walking the same program reproduces the same peers.
pub fn random_other(seed: u64, site: u64, sender: u32, occurrence: u64, num_tasks: u32, other: u32) -> u32 {
    debug_assert!(num_tasks >= 2);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&site.to_le_bytes());
    key[16..24].copy_from_slice(&(sender as u64).to_le_bytes());
    key[24..].copy_from_slice(&occurrence.to_le_bytes());
    let x = ChaCha8Rng::from_seed(key).random_range(0..num_tasks - 1);
    if x >= other { x + 1 } else { x }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: u64 = stream(7, Stream::Placement).random();
        let b: u64 = stream(7, Stream::Routing).random();
        assert_ne!(a, b);
        assert_eq!(a, stream(7, Stream::Placement).random::<u64>());
        assert_ne!(workload_seed(7, 0), workload_seed(7, 1));
    }

    #[test]
    fn random_other_excludes_and_covers() {
        let mut seen = [0u32; 5];
        for occ in 0..2000 {
            let v = random_other(3, 11, 2, occ, 5, 2);
            assert_ne!(v, 2);
            seen[v as usize] += 1;
        }
        assert_eq!(seen[2], 0);
        assert!(seen.iter().enumerate().all(|(i, &c)| i == 2 || c > 350));
        assert_eq!(random_other(1, 2, 3, 4, 9, 3), random_other(1, 2, 3, 4, 9, 3));
    }
}
