//! secp256k1 group helpers: canonical encodings, hashing into the scalar
//! field and the auxiliary generator used by re-encryption proofs.

use std::sync::OnceLock;

use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::PrimeField;
use k256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, Scalar, U256};
use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use super::PreError;
use crate::codec::{DecodeError, Decoder, Encoder};

pub const POINT_LEN: usize = 33;
pub const SCALAR_LEN: usize = 32;

pub(crate) fn point_to_bytes(p: &ProjectivePoint) -> [u8; POINT_LEN] {
    let encoded = p.to_affine().to_encoded_point(true);
    let mut out = [0u8; POINT_LEN];
    // The identity would encode as a single byte; callers never hold it.
    out.copy_from_slice(encoded.as_bytes());
    out
}

/// Decodes a compressed point, rejecting the identity and off-curve inputs.
pub(crate) fn point_from_bytes(bytes: &[u8]) -> Option<ProjectivePoint> {
    if bytes.len() != POINT_LEN || !matches!(bytes[0], 0x02 | 0x03) {
        return None;
    }
    let encoded = EncodedPoint::from_bytes(bytes).ok()?;
    let affine: Option<AffinePoint> = AffinePoint::from_encoded_point(&encoded).into();
    affine.map(ProjectivePoint::from)
}

pub(crate) fn scalar_to_bytes(s: &Scalar) -> [u8; SCALAR_LEN] {
    s.to_bytes().into()
}

/// Accepts only canonical encodings (`< q`). Zero is allowed here.
pub(crate) fn scalar_from_bytes(bytes: &[u8; SCALAR_LEN]) -> Option<Scalar> {
    Scalar::from_repr(FieldBytes::from(*bytes)).into()
}

pub(crate) fn encode_point(enc: &mut Encoder, p: &ProjectivePoint) {
    enc.fixed(&point_to_bytes(p));
}

pub(crate) fn decode_point(dec: &mut Decoder<'_>) -> Result<ProjectivePoint, DecodeError> {
    let bytes: [u8; POINT_LEN] = dec.fixed()?;
    point_from_bytes(&bytes).ok_or(DecodeError::InvalidPoint)
}

pub(crate) fn encode_scalar(enc: &mut Encoder, s: &Scalar) {
    enc.fixed(&scalar_to_bytes(s));
}

pub(crate) fn decode_scalar(dec: &mut Decoder<'_>) -> Result<Scalar, DecodeError> {
    let bytes: [u8; SCALAR_LEN] = dec.fixed()?;
    scalar_from_bytes(&bytes).ok_or(DecodeError::InvalidScalar)
}

pub(crate) fn decode_nonzero_scalar(dec: &mut Decoder<'_>) -> Result<Scalar, DecodeError> {
    let s = decode_scalar(dec)?;
    if bool::from(s.is_zero()) {
        return Err(DecodeError::InvalidScalar);
    }
    Ok(s)
}

/// SHA-256 over a length-prefixed domain tag and length-prefixed parts,
/// reduced modulo the group order.
pub(crate) fn hash_to_scalar(domain: &[u8], parts: &[&[u8]]) -> Scalar {
    let mut hasher = Sha256::new();
    hasher.update((domain.len() as u32).to_be_bytes());
    hasher.update(domain);
    for part in parts {
        hasher.update((part.len() as u32).to_be_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    <Scalar as Reduce<U256>>::reduce_bytes(&digest)
}

/// Rejection-samples a uniform non-zero scalar. Entropy failures surface as
/// errors rather than being retried.
pub(crate) fn random_nonzero_scalar<R: CryptoRngCore + ?Sized>(
    rng: &mut R,
) -> Result<Scalar, PreError> {
    loop {
        let mut bytes = [0u8; SCALAR_LEN];
        rng.try_fill_bytes(&mut bytes)
            .map_err(|e| PreError::Entropy(e.to_string()))?;
        if let Some(s) = scalar_from_bytes(&bytes) {
            if !bool::from(s.is_zero()) {
                return Ok(s);
            }
        }
    }
}

/// Second generator with no known discrete log relative to `G`, found by
/// try-and-increment over SHA-256 outputs used as x-coordinates.
pub(crate) fn aux_generator() -> &'static ProjectivePoint {
    static AUX: OnceLock<ProjectivePoint> = OnceLock::new();
    AUX.get_or_init(|| {
        for counter in 0u32.. {
            let mut hasher = Sha256::new();
            hasher.update(b"rxledger/aux-generator");
            hasher.update(counter.to_be_bytes());
            let mut candidate = [0u8; POINT_LEN];
            candidate[0] = 0x02;
            candidate[1..].copy_from_slice(&hasher.finalize());
            if let Some(p) = point_from_bytes(&candidate) {
                return p;
            }
        }
        unreachable!("counter space exhausted")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use k256::elliptic_curve::Field;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn point_roundtrip_and_identity_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..32 {
            let p = ProjectivePoint::GENERATOR * Scalar::random(&mut rng);
            assert_eq!(point_from_bytes(&point_to_bytes(&p)), Some(p));
        }
        let mut zero = [0u8; POINT_LEN];
        assert_eq!(point_from_bytes(&zero), None);
        zero[0] = 0x02;
        // x = 0 has no square root of 7 on secp256k1.
        assert_eq!(point_from_bytes(&zero), None);
    }

    #[test]
    fn scalar_encoding_is_canonical() {
        // q itself must be rejected.
        let q = hex::decode("fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141")
            .unwrap();
        let q: [u8; 32] = q.try_into().unwrap();
        assert_eq!(scalar_from_bytes(&q), None);
        let one = Scalar::ONE;
        assert_eq!(scalar_from_bytes(&scalar_to_bytes(&one)), Some(one));
    }

    #[test]
    fn hash_to_scalar_is_domain_separated() {
        let a = hash_to_scalar(b"one", &[b"x"]);
        let b = hash_to_scalar(b"two", &[b"x"]);
        let c = hash_to_scalar(b"one", &[b"x", b""]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, hash_to_scalar(b"one", &[b"x"]));
    }

    #[test]
    fn aux_generator_is_stable_and_distinct() {
        let u = aux_generator();
        assert_ne!(*u, ProjectivePoint::GENERATOR);
        assert_eq!(point_to_bytes(u), point_to_bytes(aux_generator()));
    }
}
