//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by
//! `SHA-256("hdfuzz-stream-v1" || master_seed_le || name_len_le || name || index_le)`.
//! Both primitives are fully specified, so a given `(master_seed, name, index)`
//! produces the same sequence on every platform, build and thread schedule.
//! Streams with different names or indices are independent for practical
//! purposes; callers running in parallel derive one stream per work item.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"hdfuzz-stream-v1";

#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn derive(master_seed: u64, name: &str, index: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN);
        hasher.update(master_seed.to_le_bytes());
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update(index.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn named(master_seed: u64, name: &str) -> Self {
        Self::derive(master_seed, name, 0)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
