//! Deterministic random-stream derivation.
//!
//! Every stream in a campaign is derived from `(seed_base, tags...)` through
//! a splitmix64 chain, so any episode can be reproduced in isolation and
//! adding runs never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `tags` into `base` one at a time; distinct tag tuples yield
/// independent streams.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

pub fn derive_rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Stream roles within one episode. Keeping them separate means planner
/// effort never shifts the world's noise sequence.
pub const STREAM_WORLD: u64 = 1;
pub const STREAM_PLANNER: u64 = 2;
pub const STREAM_FILTER: u64 = 3;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable() {
        let a = derive_seed(7, &[1, 2, 3]);
        let b = derive_seed(7, &[1, 2, 3]);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_tags_decorrelate() {
        let a = derive_seed(7, &[1, 2, 3]);
        let b = derive_seed(7, &[1, 2, 4]);
        let c = derive_seed(7, &[1, 3, 2]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }

    #[test]
    fn streams_reproduce() {
        let mut r1 = derive_rng(42, &[STREAM_WORLD, 0, 5]);
        let mut r2 = derive_rng(42, &[STREAM_WORLD, 0, 5]);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
