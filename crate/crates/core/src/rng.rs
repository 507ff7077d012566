//! Keyed random substreams.
//!
//! Every random decision in the crate draws from a ChaCha8 stream selected by
//! `(master seed, key)`. The key names the purpose and position of the draw
//! (for example `[DRAW, k, member]`), so results do not depend on the order in
//! which threads pick up work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags placed first in a substream key.
pub mod tag {
    pub const DRAW: u64 = 1;
    pub const FIT: u64 = 2;
    pub const CENTER: u64 = 3;
    pub const SIMULATE: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const FOLD: u64 = 6;
    pub const OVERLAP: u64 = 7;
    pub const TEST_SET: u64 = 8;
    pub const FRESH: u64 = 9;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_to_stream(key: &[u64]) -> u64 {
    let mut state = 0x6A09_E667_F3BC_C908u64 ^ key.len() as u64;
    let mut acc = splitmix64(&mut state);
    for &word in key {
        state ^= word;
        acc = acc.rotate_left(17) ^ splitmix64(&mut state);
    }
    acc
}

/// Returns the substream for `key` under `seed`.
pub fn substream(seed: u64, key: &[u64]) -> StreamRng {
    let mut state = seed;
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(key_to_stream(key));
    rng
}

/// Derives a child master seed, used to give a whole sub-computation its own namespace.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    use rand::RngCore;
    substream(seed, key).next_u64()
}
