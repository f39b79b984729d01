//! ChaCha20-Poly1305 payload encryption keyed from the KEM shared point.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use k256::ProjectivePoint;
use sha2::Sha256;

use super::group::point_to_bytes;
use super::PreError;

/// Poly1305 tag length; the only per-message overhead since the nonce is
/// derived together with the key.
pub const DEM_OVERHEAD: usize = 16;

struct DemKey {
    key: Key,
    nonce: Nonce,
}

fn derive(shared: &ProjectivePoint) -> DemKey {
    let hk = Hkdf::<Sha256>::new(None, &point_to_bytes(shared));
    let mut okm = [0u8; 44];
    hk.expand(b"rxledger/dem/v1", &mut okm)
        .expect("44 bytes is a valid HKDF-SHA256 output length");
    DemKey {
        key: *Key::from_slice(&okm[..32]),
        nonce: *Nonce::from_slice(&okm[32..]),
    }
}

pub(crate) fn seal(shared: &ProjectivePoint, plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    let k = derive(shared);
    ChaCha20Poly1305::new(&k.key)
        .encrypt(&k.nonce, Payload { msg: plaintext, aad })
        .expect("in-memory ChaCha20-Poly1305 encryption cannot fail")
}

pub(crate) fn open(shared: &ProjectivePoint, payload: &[u8], aad: &[u8]) -> Result<Vec<u8>, PreError> {
    let k = derive(shared);
    ChaCha20Poly1305::new(&k.key)
        .decrypt(&k.nonce, Payload { msg: payload, aad })
        .map_err(|_| PreError::DecryptionFailed)
}
