//! Single-hop, unidirectional proxy re-encryption over secp256k1.
//!
//! KEM/DEM construction in the style of Umbral with a single key fragment:
//! the delegator encrypts under its own key, issues a [`DelegationKey`] for a
//! delegatee, a proxy transforms the [`Capsule`] with [`reencrypt`] and the
//! delegatee opens the payload with [`decrypt_reencrypted`].
//!
//! ```
//! use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};
//! use rxledger_core::pre;
//!
//! let mut rng = ChaCha20Rng::seed_from_u64(7);
//! let patient = pre::keygen(&mut rng).unwrap();
//! let pharmacy = pre::keygen(&mut rng).unwrap();
//!
//! let ct = pre::encrypt(&patient.public, b"amoxicillin 500mg", b"MED", &mut rng).unwrap();
//! let dk = pre::generate_delegation_key(&patient.secret, &pharmacy.public, &mut rng).unwrap();
//! let re = pre::reencrypt(&dk, &ct.capsule, &mut rng).unwrap();
//! let m = pre::decrypt_reencrypted(&pharmacy.secret, &patient.public, &re, &ct).unwrap();
//! assert_eq!(m, b"amoxicillin 500mg");
//! ```

mod capsule;
mod delegation;
mod dem;
pub(crate) mod group;
mod keys;
mod reencryption;

use thiserror::Error;

pub use capsule::{decrypt_original, encrypt, Capsule, Ciphertext, CAPSULE_LEN};
pub use delegation::{generate_delegation_key, DelegationKey};
pub use dem::DEM_OVERHEAD;
pub use keys::{keygen, KeyPair, PublicKey, SecretKey, SIGNATURE_LEN};
pub use reencryption::{decrypt_reencrypted, reencrypt, ReEncryption, ReEncryptionProof};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreError {
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("invalid public key encoding")]
    InvalidPublicKey,
    #[error("invalid secret key encoding")]
    InvalidSecretKey,
    #[error("capsule failed self-verification")]
    CapsuleInvalid,
    #[error("delegation key failed verification")]
    DelegationKeyInvalid,
    #[error("re-encryption does not verify against the capsule")]
    ReEncryptionInvalid,
    #[error("decryption failed")]
    DecryptionFailed,
    #[error(transparent)]
    Decode(#[from] crate::codec::DecodeError),
}

#[cfg(test)]
mod tests;
