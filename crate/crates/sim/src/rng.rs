//! Seeded random streams.
//!
//! Every repetition of every cell draws from its own ChaCha20 stream. The key
//! is `SHA-256(tag || master_seed || cell)` and the repetition index selects
//! the ChaCha stream, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha20Rng;

const DOMAIN_TAG: &[u8] = b"stnmmd-substream-v1";

pub fn substream(master_seed: u64, cell: &str, repetition: u64) -> Stream {
    let mut h = Sha256::new();
    h.update(DOMAIN_TAG);
    h.update(master_seed.to_le_bytes());
    h.update((cell.len() as u64).to_le_bytes());
    h.update(cell.as_bytes());
    let seed: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(repetition);
    rng
}

/// Stream for a single draw outside any experiment grid.
pub fn stream_from_seed(seed: u64) -> Stream {
    substream(seed, "", 0)
}
