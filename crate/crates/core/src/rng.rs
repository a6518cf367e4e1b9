//! Seeded random streams and the two sampling primitives everything else uses.
//!
//! All randomness in a round is drawn from ChaCha8 streams derived from the
//! round seed, so the same seed replays the same candidates on any machine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type RoundRng = ChaCha8Rng;

/// Named sub-streams of a round seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Start = 1,
    Examples = 2,
    Steps = 3,
    Sets = 4,
}

pub fn stream(seed: u64, which: Stream) -> RoundRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// SplitMix64 finalizer; used to derive per-round and per-call seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a base seed with a sequence of discriminators.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ p))
}

/// Stable 64-bit FNV-1a hash of a string, for deriving seeds from names.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Uniform element of a non-empty slice.
pub fn choose<'a, T, R: Rng + ?Sized>(rng: &mut R, pool: &'a [T]) -> Option<&'a T> {
    if pool.is_empty() {
        None
    } else {
        Some(&pool[rng.random_range(0..pool.len())])
    }
}

/// Uniform sample of `k` elements without replacement (partial Fisher-Yates
/// over a copy of `pool`). Returns the whole pool, shuffled, when it holds
/// fewer than `k` elements.
pub fn sample_without_replacement<T: Clone, R: Rng + ?Sized>(
    rng: &mut R,
    pool: &[T],
    k: usize,
) -> Vec<T> {
    let mut items = pool.to_vec();
    let take = k.min(items.len());
    for i in 0..take {
        let j = rng.random_range(i..items.len());
        items.swap(i, j);
    }
    items.truncate(take);
    items
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_replayable() {
        let mut a = stream(7, Stream::Steps);
        let mut b = stream(7, Stream::Steps);
        let mut c = stream(7, Stream::Start);
        let xs: Vec<u32> = (0..8).map(|_| a.random()).collect();
        let ys: Vec<u32> = (0..8).map(|_| b.random()).collect();
        let zs: Vec<u32> = (0..8).map(|_| c.random()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn sample_is_distinct_subset() {
        let mut rng = stream(1, Stream::Sets);
        let pool: Vec<u32> = (0..20).collect();
        let s = sample_without_replacement(&mut rng, &pool, 5);
        assert_eq!(s.len(), 5);
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 5);
        assert_eq!(sample_without_replacement(&mut rng, &pool[..3], 5).len(), 3);
        assert!(sample_without_replacement(&mut rng, &pool, 0).is_empty());
    }

    #[test]
    fn derive_separates_parts() {
        assert_ne!(derive(1, &[0, 1]), derive(1, &[1, 0]));
        assert_eq!(derive(9, &[3]), derive(9, &[3]));
    }
}
