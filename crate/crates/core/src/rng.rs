//! Seeded counter-based random streams.
//!
//! Every consumer of randomness draws from a ChaCha stream keyed by
//! `(seed, stream)`. ChaCha is a counter-mode generator, so a given key
//! yields the same sequence on every platform and the streams for
//! different keys never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand::Rng;

/// Stream families. Keeping them disjoint stops e.g. dropout masks from
/// correlating with weight init for the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Crop = 3,
    Shuffle = 4,
    Split = 5,
    Synth = 6,
    Explain = 7,
}

/// Returns the generator for `(seed, family, index)`.
pub fn stream(seed: u64, family: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((family as u64) << 48) ^ index);
    rng
}

/// Uniform `u32` in `0..bound` without platform-dependent `usize` sampling.
pub fn below(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    debug_assert!(bound > 0 && bound <= u32::MAX as usize);
    rng.gen_range(0..bound as u32) as usize
}

/// Derives a child seed for `(seed, index)` with a SplitMix64 finalizer.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(rng, i + 1);
        idx.swap(i, j);
    }
    idx
}
