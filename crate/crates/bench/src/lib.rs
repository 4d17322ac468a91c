//! Fixtures shared by the benchmarks.

use rlslab::harness::Scenario;
use rlslab::{Configuration, ProcessState, RngStream, WeightedIndex};

/// A process started from a uniform random placement, so that benchmarks
/// measure typical rather than degenerate steps.
pub fn random_process(n: usize, m: u64, seed: u64) -> (ProcessState, RngStream) {
    let mut rng = RngStream::new(seed, 0);
    let config = Scenario::UniformRandom
        .generate(n, m, &mut rng)
        .expect("n > 0");
    (ProcessState::new(config), rng)
}

pub fn all_in_one(n: usize, m: u64) -> Configuration {
    Configuration::all_in_one(n, m).expect("n > 0")
}

/// Index over `n` weights drawn uniformly from `0..max_weight`.
pub fn random_index(n: usize, max_weight: u64, seed: u64) -> WeightedIndex {
    let mut rng = RngStream::new(seed, 0);
    let weights: Vec<u64> = (0..n).map(|_| rng.below(max_weight)).collect();
    WeightedIndex::build(&weights)
}
