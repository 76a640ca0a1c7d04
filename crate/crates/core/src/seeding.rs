//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed plus a stream tag and an index, so streams never alias
//! and results do not depend on platform or thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_ANNOTATOR: u64 = 0x616e_6e6f;
pub(crate) const STREAM_TEST_SPLIT: u64 = 0x7465_7374;
pub(crate) const STREAM_SUBSET: u64 = 0x7375_6273;
pub(crate) const STREAM_TRAIN: u64 = 0x7472_6169;
pub(crate) const STREAM_INIT: u64 = 0x696e_6974;

pub(crate) fn keyed_rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub(crate) fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    keyed_rng(base, stream, index).next_u64()
}
