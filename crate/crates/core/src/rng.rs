//! Stream-splittable randomness.
//!
//! Every random quantity is addressed by a key tuple (base seed plus role
//! tags) and drawn from its own ChaCha stream, so trials, blocks and
//! codewords can be generated in any order or in parallel with identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role tags mixed into derived seeds.
pub mod tag {
    pub const RELAY_WORD: u64 = 0x5245_4c41;
    pub const TX_WORD: u64 = 0x5458_574f;
    pub const INITIAL_STATE: u64 = 0x494e_4954;
    pub const BSC: u64 = 0x4253_4321;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const MESSAGES: u64 = 0x4d53_4753;
    pub const CODEBOOK: u64 = 0x434f_4445;
    pub const ENSEMBLE: u64 = 0x454e_534d;
    pub const CHAIN: u64 = 0x4348_4149;
    pub const RESTART: u64 = 0x5253_5452;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one seed.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Like [`derive`], with trailing variable-length bytes (big message indices).
pub fn derive_bytes(base: u64, parts: &[u64], bytes: &[u8]) -> u64 {
    let mut acc = derive(base, parts);
    acc = splitmix(acc ^ bytes.len() as u64);
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        acc = splitmix(acc ^ splitmix(u64::from_le_bytes(word)));
    }
    acc
}

pub fn stream(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, parts))
}

/// Uniform in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
