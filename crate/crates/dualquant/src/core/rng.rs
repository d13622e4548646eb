//! Reproducible random streams.
//!
//! Every stochastic operation takes an [`RngStream`] value: a `(seed,
//! stream_id)` pair that deterministically names one ChaCha8 key stream.
//! Identical pairs reproduce identical draw sequences across runs,
//! platforms, and worker counts. Parallel or hierarchical consumers
//! (Monte Carlo shards, scan rows, optimizer restarts) derive disjoint
//! child streams with [`RngStream::child`] instead of sharing one
//! generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A named position in the space of reproducible generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    /// Base seed, typically taken from the experiment config.
    pub seed: u64,
    /// Stream selector under the same seed.
    pub stream_id: u64,
}

impl RngStream {
    /// Names the stream `(seed, stream_id)`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derives a child stream for subtask `tag`.
    ///
    /// Children are produced by SplitMix64 hash chaining, so distinct
    /// tags (and distinct parents) map to distinct streams except with
    /// negligible probability, and the derivation itself is part of the
    /// reproducibility contract.
    pub fn child(&self, tag: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        }
    }
}

/// SplitMix64 finalizer; a fixed bijective mixer on u64.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_streams_reproduce_identical_draws() {
        let a = RngStream::new(7, 3);
        let b = RngStream::new(7, 3);
        let xs: Vec<f64> = a.rng().sample_iter(rand::distributions::Standard).take(64).collect();
        let ys: Vec<f64> = b.rng().sample_iter(rand::distributions::Standard).take(64).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn different_streams_differ() {
        let a = RngStream::new(7, 0);
        let b = RngStream::new(7, 1);
        let x: u64 = a.rng().gen();
        let y: u64 = b.rng().gen();
        assert_ne!(x, y);
    }

    #[test]
    fn child_streams_are_deterministic_and_distinct() {
        let base = RngStream::new(42, 0);
        assert_eq!(base.child(5), base.child(5));
        let mut seen = std::collections::HashSet::new();
        for tag in 0..1000 {
            assert!(seen.insert(base.child(tag).stream_id), "collision at tag {tag}");
        }
        // Children of distinct parents stay distinct too.
        assert_ne!(base.child(0), base.child(1).child(0));
    }
}
