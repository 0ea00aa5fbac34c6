//! Deterministic stream derivation.
//!
//! All randomness in the crate flows through explicitly passed generators.
//! Monte-Carlo drivers split their budget across sub-streams derived from a
//! root seed with [`stream`]; the assignment is fixed, so results do not
//! depend on scheduling or parallelism degree.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha12 stream from `(seed, tag, index)`.
///
/// `tag` separates logical roles (e.g. source noise vs. dither) and `index`
/// separates work chunks within a role.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha12Rng {
    let mut state = seed ^ tag.rotate_left(17) ^ index.rotate_left(41);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = stream(7, 1, 0).random();
        let b: f64 = stream(7, 1, 0).random();
        let c: f64 = stream(7, 1, 1).random();
        let d: f64 = stream(7, 2, 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
