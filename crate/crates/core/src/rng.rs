//! Seeded random streams.
//!
//! Every stochastic component derives its generator from a root seed plus a
//! small tuple of stream coordinates, so results do not depend on thread
//! scheduling or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with stream coordinates into a 64-bit seed.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Generator for the stream `(seed, coords...)`.
pub fn stream(seed: u64, coords: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(3, &[1, 2]).random();
        let b: u64 = stream(3, &[1, 2]).random();
        let c: u64 = stream(3, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
