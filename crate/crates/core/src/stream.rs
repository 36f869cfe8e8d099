//! Deterministic random streams.
//!
//! A single 64-bit master seed is split into independent per-replication
//! streams by a counter-based scheme, so replications can run on any number
//! of threads and still produce bit-identical output when merged in index
//! order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The RNG used throughout: fast, seedable, reproducible across platforms.
pub type Stream = ChaCha12Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 32-byte ChaCha seed from `(master, index)` via splitmix64.
fn derive_seed(master: u64, index: u64) -> [u8; 32] {
    let mut state = master ^ 0x6a09_e667_f3bc_c908u64.wrapping_mul(index.wrapping_add(1));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// Stream for replication `index` under `master`.
pub fn replication_stream(master: u64, index: u64) -> Stream {
    ChaCha12Rng::from_seed(derive_seed(master, index))
}

/// Stream for miscellaneous one-off use (index 0 convention).
pub fn master_stream(master: u64) -> Stream {
    replication_stream(master, 0)
}
