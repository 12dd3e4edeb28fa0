//! Seeded randomness on ChaCha8 streams.
//!
//! Every consumer draws from its own stream, keyed by the global seed and a
//! path of labels (see [`SeededRng::derive`]), so results do not depend on
//! how work is scheduled across threads.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, PartialEq)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream keyed by `seed` and a path of labels,
    /// e.g. `(global_seed, [purpose, client, epoch])`. Each label selects a
    /// ChaCha stream of its parent key, whose first 32 bytes become the
    /// child key.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &label in path {
            rng.set_stream(label);
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            rng = ChaCha8Rng::from_seed(key);
        }
        SeededRng { inner: rng }
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.random_range(0..n)
    }

    /// Standard normal sample.
    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
