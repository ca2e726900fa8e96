//! Seed derivation for independent deterministic random streams.
//!
//! Every source of randomness in the pipeline is keyed by (master seed,
//! domain string, coordinate list), so any unit of work draws from its own
//! stream and results do not depend on scheduling or job count.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

// splitmix64 finalizer; good mixing, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse (master, domain, coordinates) into a single u64 key.
pub fn derive_key(master: u64, domain: &str, coords: &[u64]) -> u64 {
    let mut h = mix(master);
    for &b in domain.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    for &c in coords {
        h = mix(h ^ c);
    }
    h
}

/// A ChaCha stream keyed by (master, domain, coordinates).
pub fn stream(master: u64, domain: &str, coords: &[u64]) -> ChaCha8Rng {
    let key = derive_key(master, domain, coords);
    let mut seed = [0u8; 32];
    let mut word = key;
    for chunk in seed.chunks_exact_mut(8) {
        word = mix(word);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// A ChaCha stream straight from a u64 seed (for config-level seeds).
pub fn stream_from_seed(seed: u64, domain: &str) -> ChaCha8Rng {
    stream(seed, domain, &[])
}
