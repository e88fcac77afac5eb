//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for substream `index` of kind `tag` under `session`.
pub fn derive(session: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(mix64(session) ^ tag) ^ index)
}

pub fn rng_for(session: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(session, tag, index))
}

pub(crate) const TAG_BATCH: u64 = 0x6261_7463_6800_0001;
pub(crate) const TAG_PERMUTATION: u64 = 0x7065_726d_0000_0002;
pub(crate) const TAG_FILE: u64 = 0x6669_6c65_0000_0003;
pub(crate) const TAG_CHANNEL: u64 = 0x6368_616e_0000_0004;
pub(crate) const TAG_RECODE: u64 = 0x7265_636f_0000_0005;
pub(crate) const TAG_ACCESS: u64 = 0x6163_6365_0000_0006;
