use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::pre::{keygen, KeyPair};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn keys(seed: u64) -> KeyPair {
    keygen(&mut rng(seed)).expect("keygen")
}
