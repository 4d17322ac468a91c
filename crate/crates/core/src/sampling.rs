//! Seeded random streams and a dynamic weighted index.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose output for a given key and stream is fixed by
/// the algorithm and therefore identical on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        self.rng.random_range(0..bound)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a master seed. Used to give every sweep
/// cell its own seed, so adding cells never perturbs existing ones.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(master), |acc, &w| mix64(acc ^ mix64(w)))
}

/// Exponential draw by inversion: `-ln(1 - U) / rate`.
pub fn exp_holding_time(rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidRate(rate));
    }
    Ok(exp_unchecked(rate, rng))
}

#[inline]
pub(crate) fn exp_unchecked(rate: f64, rng: &mut RngStream) -> f64 {
    -(1.0 - rng.unit()).ln() / rate
}

pub fn sample_uniform_bin(n: usize, rng: &mut RngStream) -> Result<usize> {
    if n == 0 {
        return Err(Error::EmptyWeights);
    }
    Ok(rng.index(n))
}

pub fn sample_source_bin(index: &WeightedIndex, rng: &mut RngStream) -> Result<usize> {
    index.sample(rng)
}

/// Fenwick tree over non-negative integer weights.
///
/// `sample` returns `i` with probability `weights[i] / total` in `O(log n)`;
/// `update` adjusts one weight in `O(log n)`.
#[derive(Debug, Clone)]
pub struct WeightedIndex {
    weights: Vec<u64>,
    // 1-based partial sums
    tree: Vec<u64>,
    total: u64,
    top_bit: usize,
}

impl WeightedIndex {
    pub fn build(weights: &[u64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0u64; n + 1];
        tree[1..].copy_from_slice(weights);
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i];
            }
        }
        let top_bit = if n == 0 {
            0
        } else {
            1 << (usize::BITS - 1 - n.leading_zeros())
        };
        Self {
            weights: weights.to_vec(),
            tree,
            total: weights.iter().sum(),
            top_bit,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn weight(&self, i: usize) -> u64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn update(&mut self, i: usize, delta: i64) -> Result<()> {
        let len = self.weights.len();
        let w = *self
            .weights
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, len })?;
        let next = w as i128 + delta as i128;
        if next < 0 {
            return Err(Error::WeightUnderflow {
                index: i,
                weight: w,
                delta,
            });
        }
        if delta != 0 {
            self.weights[i] = next as u64;
            self.total = (self.total as i128 + delta as i128) as u64;
            let mut j = i + 1;
            while j <= len {
                self.tree[j] = (self.tree[j] as i128 + delta as i128) as u64;
                j += j & j.wrapping_neg();
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn increment(&mut self, i: usize) {
        self.weights[i] += 1;
        self.total += 1;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += 1;
            j += j & j.wrapping_neg();
        }
    }

    #[inline]
    pub(crate) fn decrement(&mut self, i: usize) {
        debug_assert!(self.weights[i] > 0);
        self.weights[i] -= 1;
        self.total -= 1;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] -= 1;
            j += j & j.wrapping_neg();
        }
    }

    /// Index of the bin holding the `target`-th unit of weight, 0-based.
    pub fn locate(&self, mut target: u64) -> usize {
        debug_assert!(target < self.total);
        let n = self.weights.len();
        let mut pos = 0;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<usize> {
        if self.total == 0 {
            return Err(Error::EmptyWeights);
        }
        Ok(self.locate(rng.below(self.total)))
    }
}
