use k256::{ProjectivePoint, Scalar};
use rand_core::CryptoRngCore;

use super::dem;
use super::group::{self, point_to_bytes};
use super::keys::{PublicKey, SecretKey};
use super::PreError;
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};

pub const CAPSULE_LEN: usize = 33 + 33 + 32;

/// KEM half of a ciphertext: `E = rG`, `V = uG`, `s = u + r·H(E, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capsule {
    pub(crate) e: ProjectivePoint,
    pub(crate) v: ProjectivePoint,
    pub(crate) s: Scalar,
}

impl Capsule {
    pub(crate) fn challenge(e: &ProjectivePoint, v: &ProjectivePoint) -> Scalar {
        group::hash_to_scalar(b"rxledger/capsule", &[&point_to_bytes(e), &point_to_bytes(v)])
    }

    /// `s·G == V + H(E, V)·E`
    pub fn verify(&self) -> bool {
        let h = Self::challenge(&self.e, &self.v);
        ProjectivePoint::GENERATOR * self.s == self.v + self.e * h
    }

    fn encapsulate<R: CryptoRngCore + ?Sized>(
        pk: &PublicKey,
        rng: &mut R,
    ) -> Result<(Self, ProjectivePoint), PreError> {
        let r = group::random_nonzero_scalar(rng)?;
        let u = group::random_nonzero_scalar(rng)?;
        let e = ProjectivePoint::GENERATOR * r;
        let v = ProjectivePoint::GENERATOR * u;
        let s = u + r * Self::challenge(&e, &v);
        let shared = *pk.point() * (r + u);
        Ok((Self { e, v, s }, shared))
    }
}

impl Canonical for Capsule {
    fn encode(&self, enc: &mut Encoder) {
        group::encode_point(enc, &self.e);
        group::encode_point(enc, &self.v);
        group::encode_scalar(enc, &self.s);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            e: group::decode_point(dec)?,
            v: group::decode_point(dec)?,
            s: group::decode_scalar(dec)?,
        })
    }
}

/// Hybrid ciphertext. The payload is authenticated together with the capsule
/// and the associated data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub capsule: Capsule,
    pub payload: Vec<u8>,
    pub associated_data: Vec<u8>,
}

impl Ciphertext {
    pub(crate) fn aad(capsule: &Capsule, associated_data: &[u8]) -> Vec<u8> {
        let mut enc = Encoder::with_capacity(CAPSULE_LEN + 4 + associated_data.len());
        enc.put(capsule).bytes(associated_data);
        enc.finish()
    }

    /// Plaintext length implied by the payload.
    pub fn plaintext_len(&self) -> usize {
        self.payload.len().saturating_sub(dem::DEM_OVERHEAD)
    }
}

impl Canonical for Ciphertext {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.capsule)
            .bytes(&self.payload)
            .bytes(&self.associated_data);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let capsule = dec.get()?;
        let payload = dec.bytes()?;
        if payload.len() < dem::DEM_OVERHEAD {
            return Err(DecodeError::NonCanonical("payload shorter than tag"));
        }
        Ok(Self {
            capsule,
            payload,
            associated_data: dec.bytes()?,
        })
    }
}

/// `Enc(pk, m)`: fresh capsule for `pk` plus the authenticated payload.
pub fn encrypt<R: CryptoRngCore + ?Sized>(
    pk: &PublicKey,
    plaintext: &[u8],
    associated_data: &[u8],
    rng: &mut R,
) -> Result<Ciphertext, PreError> {
    let (capsule, shared) = Capsule::encapsulate(pk, rng)?;
    let payload = dem::seal(&shared, plaintext, &Ciphertext::aad(&capsule, associated_data));
    Ok(Ciphertext {
        capsule,
        payload,
        associated_data: associated_data.to_vec(),
    })
}

/// Decryption by the holder of the key the ciphertext was made for.
pub fn decrypt_original(sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<u8>, PreError> {
    if !ct.capsule.verify() {
        return Err(PreError::CapsuleInvalid);
    }
    let shared = (ct.capsule.e + ct.capsule.v) * sk.scalar();
    dem::open(
        &shared,
        &ct.payload,
        &Ciphertext::aad(&ct.capsule, &ct.associated_data),
    )
}
