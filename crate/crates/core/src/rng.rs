//! Deterministic, labelled random streams.
//!
//! Every consumer of randomness (environment dynamics, exploration, minibatch
//! shuffling, weight initialisation, ...) draws from its own ChaCha8 stream.
//! The 256-bit ChaCha key is `SHA-256(seed_le || 0x00 || label)`, so two
//! labels never share generator state and a `(seed, label)` pair always
//! yields the same sequence. ChaCha8 is a counter-based generator: the key
//! fixes the stream and the internal block counter advances it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64, stream_label: &str) -> StreamRng {
    ChaCha8Rng::from_seed(stream_key(seed, stream_label))
}

fn stream_key(seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

/// Which family a derived seed belongs to. Evaluation seeds have the top
/// bit set and every other seed has it cleared, so the two sets are
/// disjoint by construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedDomain {
    Train,
    Eval,
}

const EVAL_BIT: u64 = 1 << 63;

pub fn derive_seed(master: u64, label: &str, index: u64, domain: SeedDomain) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([1u8]);
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut raw = [0u8; 8];
    raw.copy_from_slice(&digest[..8]);
    let value = u64::from_le_bytes(raw);
    match domain {
        SeedDomain::Train => value & !EVAL_BIT,
        SeedDomain::Eval => value | EVAL_BIT,
    }
}

pub fn is_eval_seed(seed: u64) -> bool {
    seed & EVAL_BIT != 0
}
