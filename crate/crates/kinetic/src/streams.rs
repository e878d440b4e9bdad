//! Counter-based splittable random streams.
//!
//! Every consumer of randomness receives a stream derived from a master
//! seed and a path of integers (replica index, purpose tag, ...). Streams
//! with distinct paths are statistically independent, and the derivation
//! does not depend on thread scheduling, so ensembles are reproducible
//! bit-for-bit under any execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer; used as the mixing function for seed derivation.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed from `(master, tag)`; used to give
/// auxiliary consumers (oracles, sub-experiments) disjoint seed spaces.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut state = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut state);
    splitmix64(&mut state)
}

/// Derives an independent ChaCha stream from `(master, path)`.
pub fn derive_rng(master: u64, path: &[u64]) -> ChaCha12Rng {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
