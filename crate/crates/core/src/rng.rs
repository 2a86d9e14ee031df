//! Named random streams derived from a single user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent generator for `(seed, name, index)`. Different names or
/// indices never share a stream.
pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(name.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Sub-seed for components that take a plain `u64`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    use rand::Rng;
    stream(seed, name, 0).random()
}
