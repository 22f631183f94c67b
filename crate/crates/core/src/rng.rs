//! Deterministic seed derivation.
//!
//! All randomness flows from a 64-bit master seed through [`derive_rng`],
//! which mixes the seed with a list of integer tags (grid index, run index,
//! stream id, ...) and expands the result into a ChaCha8 key. ChaCha is
//! counter-based and platform-independent, so a `(master_seed, tags)` pair
//! identifies one reproducible random stream regardless of thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of the SplitMix64 sequence; updates `state` and returns the output.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a reproducible generator from a master seed and a tag path.
pub fn derive_rng(master_seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = master_seed;
    let mut acc = splitmix64(&mut state);
    for &tag in tags {
        state = acc ^ tag.wrapping_mul(0xA24B_AED4_963E_E407);
        acc = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
