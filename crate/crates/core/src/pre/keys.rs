use std::fmt;

use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{Signature, SigningKey, VerifyingKey};
use k256::{NonZeroScalar, ProjectivePoint, Scalar};
use rand_core::CryptoRngCore;

use super::group::{self, POINT_LEN, SCALAR_LEN};
use super::PreError;
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};

pub const SIGNATURE_LEN: usize = 64;

/// A scalar in `[1, q)`.
#[derive(Clone)]
pub struct SecretKey(Scalar);

impl SecretKey {
    pub fn random<R: CryptoRngCore + ?Sized>(rng: &mut R) -> Result<Self, PreError> {
        group::random_nonzero_scalar(rng).map(Self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let bytes: [u8; SCALAR_LEN] = bytes.try_into().map_err(|_| PreError::InvalidSecretKey)?;
        match group::scalar_from_bytes(&bytes) {
            Some(s) if !bool::from(s.is_zero()) => Ok(Self(s)),
            _ => Err(PreError::InvalidSecretKey),
        }
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        group::scalar_to_bytes(&self.0)
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(ProjectivePoint::GENERATOR * self.0)
    }

    pub(crate) fn scalar(&self) -> &Scalar {
        &self.0
    }

    /// Deterministic (RFC 6979) ECDSA over SHA-256 of `msg`.
    pub fn sign(&self, msg: &[u8]) -> [u8; SIGNATURE_LEN] {
        let nz = NonZeroScalar::new(self.0).expect("secret key scalar is non-zero");
        let signing = SigningKey::from(nz);
        let sig: Signature = signing.sign(msg);
        sig.to_bytes().into()
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl PartialEq for SecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl Eq for SecretKey {}

/// `generator * secret`, never the identity.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(ProjectivePoint);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        group::point_from_bytes(bytes)
            .map(Self)
            .ok_or(PreError::InvalidPublicKey)
    }

    pub fn to_bytes(&self) -> [u8; POINT_LEN] {
        group::point_to_bytes(&self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub(crate) fn point(&self) -> &ProjectivePoint {
        &self.0
    }

    pub fn verify(&self, msg: &[u8], signature: &[u8; SIGNATURE_LEN]) -> bool {
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_affine(self.0.to_affine()) else {
            return false;
        };
        vk.verify(msg, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl PartialOrd for PublicKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PublicKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_bytes().cmp(&other.to_bytes())
    }
}

impl Canonical for PublicKey {
    fn encode(&self, enc: &mut Encoder) {
        group::encode_point(enc, &self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        group::decode_point(dec).map(Self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

impl KeyPair {
    pub fn from_secret(secret: SecretKey) -> Self {
        let public = secret.public_key();
        Self { secret, public }
    }
}

/// Draws a fresh key pair from `rng`. An entropy failure returns an error and
/// no key material.
pub fn keygen<R: CryptoRngCore + ?Sized>(rng: &mut R) -> Result<KeyPair, PreError> {
    SecretKey::random(rng).map(KeyPair::from_secret)
}
