//! Named random streams derived from one root seed.
//!
//! Every consumer of randomness asks for a stream by name and index, e.g.
//! `("sequence", [instance, k])` or `("policy:random", [instance, k])`. The
//! stream seed is a SHA-256 digest of the root seed, the name and the
//! indices, so streams are independent of each other and of the order in
//! which they are requested. Adding a policy to a comparison therefore never
//! perturbs the user sequences or any other policy's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used for every stream.
pub type StreamRng = ChaCha8Rng;

pub fn stream_seed(root: u64, name: &str, indices: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    for &k in indices {
        hasher.update(k.to_le_bytes());
    }
    hasher.finalize().into()
}

pub fn stream(root: u64, name: &str, indices: &[u64]) -> StreamRng {
    StreamRng::from_seed(stream_seed(root, name, indices))
}

/// A `u64` seed for APIs that take one.
pub fn sub_seed(root: u64, name: &str, indices: &[u64]) -> u64 {
    let digest = stream_seed(root, name, indices);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
