//! Named, per-purpose random streams derived from one base seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A ChaCha stream keyed by `(seed, purpose, counter)`. Streams with
/// different purposes or counters are independent; the same key always
/// yields the same stream.
pub fn stream_rng(seed: u64, purpose: &str, counter: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update([0u8]);
    h.update(counter.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
