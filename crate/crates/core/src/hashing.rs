//! Fixed, documented hashing used for sticky assignment and random stream
//! derivation. Results are identical across machines for a given seed.
//!
//! `hash64` is FNV-1a (64-bit) over the little-endian seed followed by each
//! part as `len (u64 LE) ++ bytes`, finished with the SplitMix64 mixer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn hash64(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut state = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    for part in parts {
        state = fnv1a(state, &(part.len() as u64).to_le_bytes());
        state = fnv1a(state, part);
    }
    mix64(state)
}

/// Independent random stream keyed by `(seed, parts)`.
pub fn stream(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash64(seed, parts))
}
