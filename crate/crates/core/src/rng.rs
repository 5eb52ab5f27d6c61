//! Seed derivation: every random stream in a run is a ChaCha generator keyed
//! by `(seed, tag)` so streams stay independent and runs stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step, used only to spread seed bits.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for stream `tag` under `seed`.
pub fn derive_rng(seed: u64, tag: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}
