//! Seeded randomness.
//!
//! Every random decision in the crate draws from a fresh [`ChaCha8Rng`]
//! created with `ChaCha8Rng::seed_from_u64(seed)`; streams are never shared
//! between decisions. ChaCha output is specified independently of platform
//! and word size, so the same seed reproduces the same plan, subsample and
//! token draw everywhere.
//!
//! | Decision | Seed |
//! |----------|------|
//! | prompt-variant choice | plan seed |
//! | validation subsample | caller seed |
//! | simulated generation | per-repeat seed (see [`repeat_seed`]) |

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for repeat `repeat` of prompt variant `variant`:
/// `base ^ mix64((variant << 32) | repeat)`.
pub fn repeat_seed(base: u64, variant: u32, repeat: u32) -> u64 {
    base ^ mix64(((variant as u64) << 32) | repeat as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn repeat_seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for v in 0..10 {
            for r in 0..6 {
                assert!(seen.insert(repeat_seed(42, v, r)));
            }
        }
        assert_eq!(repeat_seed(42, 3, 4), repeat_seed(42, 3, 4));
        assert_ne!(repeat_seed(42, 0, 1), repeat_seed(42, 1, 0));
    }

    #[test]
    fn streams_are_reproducible() {
        let mut x = seeded(7);
        let mut y = seeded(7);
        for _ in 0..16 {
            assert_eq!(x.random::<u64>(), y.random::<u64>());
        }
    }
}
