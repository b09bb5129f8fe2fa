//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptsfd_core::{label_count, LabelCount, Vote, VoteMatrix};

/// Uniform random votes with the given abstention rate, plus their counts.
pub fn random_votes(n: usize, m: usize, n_classes: usize, abstain: f64, seed: u64) -> (VoteMatrix, Vec<LabelCount>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut votes = VoteMatrix::new(n, m);
    for i in 0..n {
        for j in 0..m {
            if !rng.random_bool(abstain) {
                votes.set(i, j, Vote::of(rng.random_range(0..n_classes as u16)));
            }
        }
    }
    let counts = votes.rows().map(|r| label_count(r, n_classes).expect("in range")).collect();
    (votes, counts)
}
