//! Point-to-point schedules of the collectives.
//!
//! A schedule is a list of phases for one participant. All operations of a
//! phase are posted together and the phase ends when every one of them
//! completes. Fragments carry the full buffer at every step.

/// One phase: peers (indices into the sorted participant list) to receive
/// from and to send to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Phase {
    pub recv_from: Vec<usize>,
    pub send_to: Vec<usize>,
}

impl Phase {
    fn send(peer: usize) -> Phase {
        Phase { recv_from: vec![], send_to: vec![peer] }
    }

    fn recv(peer: usize) -> Phase {
        Phase { recv_from: vec![peer], send_to: vec![] }
    }
}

/// Recursive doubling for participant `i` of `p`. When `p` is not a power
/// of two, the `p - m` participants above the largest power of two `m`
/// first hand their data to partner `i - m` and get the result back at the
/// end.
pub fn recursive_doubling(i: usize, p: usize) -> Vec<Phase> {
    assert!(i < p);
    if p == 1 {
        return Vec::new();
    }
    let m = 1usize << (usize::BITS - 1 - p.leading_zeros());
    let rem = p - m;
    if i >= m {
        return vec![Phase::send(i - m), Phase::recv(i - m)];
    }
    let mut phases = Vec::new();
    if i < rem {
        phases.push(Phase::recv(i + m));
    }
    let mut mask = 1;
    while mask < m {
        let peer = i ^ mask;
        phases.push(Phase { recv_from: vec![peer], send_to: vec![peer] });
        mask <<= 1;
    }
    if i < rem {
        phases.push(Phase::send(i + m));
    }
    phases
}

/// Binomial tree broadcast from participant `root`: receive once from the
/// parent, then send to each child in turn, farthest subtree first.
pub fn binomial_bcast(i: usize, p: usize, root: usize) -> Vec<Phase> {
    assert!(i < p && root < p);
    let rel = (i + p - root) % p;
    let abs = |r: usize| (r + root) % p;
    let mut phases = Vec::new();
    let mut mask = 1;
    while mask < p {
        if rel & mask != 0 {
            phases.push(Phase::recv(abs(rel - mask)));
            break;
        }
        mask <<= 1;
    }
    mask >>= 1;
    while mask > 0 {
        if rel + mask < p {
            phases.push(Phase::send(abs(rel + mask)));
        }
        mask >>= 1;
    }
    phases
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fragments(schedules: &[Vec<Phase>]) -> usize {
        schedules.iter().flatten().map(|ph| ph.send_to.len()).sum()
    }

    #[test]
    fn allreduce_two_ranks() {
        assert_eq!(recursive_doubling(0, 2), vec![Phase { recv_from: vec![1], send_to: vec![1] }]);
    }

    #[test]
    fn allreduce_power_of_two_steps() {
        assert_eq!(recursive_doubling(5, 1024).len(), 10);
        let all: Vec<_> = (0..8).map(|i| recursive_doubling(i, 8)).collect();
        assert_eq!(fragments(&all), 24);
    }

    #[test]
    fn allreduce_folds_non_power_of_two() {
        // p = 6: m = 4, ranks 4 and 5 fold onto 0 and 1
        assert_eq!(recursive_doubling(5, 6), vec![Phase::send(1), Phase::recv(1)]);
        assert_eq!(recursive_doubling(1, 6).len(), 1 + 2 + 1);
        assert_eq!(recursive_doubling(3, 6).len(), 2);
        let all: Vec<_> = (0..6).map(|i| recursive_doubling(i, 6)).collect();
        assert_eq!(fragments(&all), 4 * 2 + 2 * 2);
    }

    #[test]
    fn bcast_tree() {
        let all: Vec<_> = (0..8).map(|i| binomial_bcast(i, 8, 0)).collect();
        assert_eq!(fragments(&all), 7);
        assert_eq!(all[0].len(), 3, "root sends to 4, 2, 1");
        assert_eq!(all[0][0], Phase::send(4));
        assert_eq!(all[7], vec![Phase::recv(6)]);
        // depth: longest chain of receives is 3 (0 -> 4 -> 6 -> 7)
        let rooted: Vec<_> = (0..5).map(|i| binomial_bcast(i, 5, 3)).collect();
        assert_eq!(fragments(&rooted), 4);
        assert!(rooted[3].iter().all(|ph| ph.recv_from.is_empty()));
    }
}
