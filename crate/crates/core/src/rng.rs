//! Keyed random substreams.
//!
//! Every random draw in a campaign comes from a ChaCha8 stream whose seed is
//! the SHA-256 of the master seed and a key path such as
//! `(seed id, method, transform, candidate)`. Streams are therefore
//! independent of execution order and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone)]
pub struct StreamKey {
    hasher: Sha256,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"srmt/substream/v1");
        hasher.update(master_seed.to_le_bytes());
        Self { hasher }
    }

    pub fn with_str(mut self, part: &str) -> Self {
        self.hasher.update((part.len() as u64).to_le_bytes());
        self.hasher.update(part.as_bytes());
        self
    }

    pub fn with_u64(mut self, part: u64) -> Self {
        self.hasher.update(u64::MAX.to_le_bytes());
        self.hasher.update(part.to_le_bytes());
        self
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.hasher.finalize().into())
    }
}
