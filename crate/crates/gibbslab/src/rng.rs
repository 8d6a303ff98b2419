//! Deterministic RNG streams.
//!
//! Every randomized routine in this crate draws from a stream derived
//! from a master seed and a path of stream ids (trial index, step index,
//! restart index, ...). Streams with different paths are independent,
//! and a given (seed, path) pair always yields the same draws, so
//! reports are reproducible bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Mixes a 64-bit value into a running state (splitmix64 finalizer).
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A ChaCha stream addressed by a master seed and a path of ids.
///
/// `stream(seed, &[trial])` and `stream(seed, &[trial, step])` are
/// unrelated streams; reusing the same path reproduces the same draws.
pub fn stream(master_seed: u64, path: &[u64]) -> ChaCha12Rng {
    let mut state = mix(master_seed ^ 0x6c62_272e_07bb_0142);
    for &id in path {
        state = mix(state ^ mix(id));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_mut(8).enumerate() {
        state = mix(state.wrapping_add(i as u64 + 1));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
