//! Named, reproducible random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream whose seed is the
//! SHA3-256 digest of `(global_seed, label)`. Streams never share state, so
//! the order in which workers or sweep points run cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha3::{Digest, Sha3_256};

pub type SimRng = ChaCha8Rng;

/// Derives a 32-byte stream seed from a global seed and a label.
pub fn stream_seed(global_seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha3_256::new();
    hasher.update(b"ptsfd-stream\x00");
    hasher.update(global_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

pub fn stream(global_seed: u64, label: &str) -> SimRng {
    ChaCha8Rng::from_seed(stream_seed(global_seed, label))
}

/// A 64-bit seed for a named sub-stream, for types that carry a seed.
pub fn derive_seed(global_seed: u64, label: &str) -> u64 {
    let bytes = stream_seed(global_seed, label);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}
