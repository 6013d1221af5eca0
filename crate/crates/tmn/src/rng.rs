//! Reproducible randomness derived from one master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// A random stream tied to (seed, label).
///
/// Every consumer of randomness asks for its own label, so changing how one
/// component draws (say, sampling noise) never shifts what another sees
/// (say, the split shuffle). Identical (seed, label) pairs always replay
/// the same sequence.
pub fn named_stream(seed: u64, label: &str) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
