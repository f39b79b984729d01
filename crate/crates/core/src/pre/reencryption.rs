use k256::{ProjectivePoint, Scalar};
use rand_core::CryptoRngCore;

use super::capsule::{Capsule, Ciphertext};
use super::delegation::{blinding_factor, metadata_message, DelegationKey};
use super::dem;
use super::group::{self, point_to_bytes};
use super::keys::{PublicKey, SecretKey, SIGNATURE_LEN};
use super::PreError;
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};

/// Chaum-Pedersen style proof that `E'`, `V'` and the key commitment share
/// the same discrete log `rk`, plus the delegation key's public metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReEncryptionProof {
    pub(crate) key_id: Scalar,
    pub(crate) commitment: ProjectivePoint,
    pub(crate) e2: ProjectivePoint,
    pub(crate) v2: ProjectivePoint,
    pub(crate) u2: ProjectivePoint,
    pub(crate) z: Scalar,
    pub(crate) key_signature: [u8; SIGNATURE_LEN],
}

impl Canonical for ReEncryptionProof {
    fn encode(&self, enc: &mut Encoder) {
        group::encode_scalar(enc, &self.key_id);
        group::encode_point(enc, &self.commitment);
        group::encode_point(enc, &self.e2);
        group::encode_point(enc, &self.v2);
        group::encode_point(enc, &self.u2);
        group::encode_scalar(enc, &self.z);
        enc.fixed(&self.key_signature);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            key_id: group::decode_nonzero_scalar(dec)?,
            commitment: group::decode_point(dec)?,
            e2: group::decode_point(dec)?,
            v2: group::decode_point(dec)?,
            u2: group::decode_point(dec)?,
            z: group::decode_scalar(dec)?,
            key_signature: dec.fixed()?,
        })
    }
}

/// The proxy's output: `E' = rk·E`, `V' = rk·V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReEncryption {
    pub(crate) e_prime: ProjectivePoint,
    pub(crate) v_prime: ProjectivePoint,
    pub(crate) precursor: ProjectivePoint,
    pub(crate) proof: ReEncryptionProof,
}

fn proof_challenge(
    capsule: &Capsule,
    e_prime: &ProjectivePoint,
    v_prime: &ProjectivePoint,
    precursor: &ProjectivePoint,
    commitment: &ProjectivePoint,
    e2: &ProjectivePoint,
    v2: &ProjectivePoint,
    u2: &ProjectivePoint,
) -> Scalar {
    group::hash_to_scalar(
        b"rxledger/reencryption",
        &[
            &point_to_bytes(&capsule.e),
            &point_to_bytes(e_prime),
            &point_to_bytes(e2),
            &point_to_bytes(&capsule.v),
            &point_to_bytes(v_prime),
            &point_to_bytes(v2),
            &point_to_bytes(group::aux_generator()),
            &point_to_bytes(commitment),
            &point_to_bytes(u2),
            &point_to_bytes(precursor),
        ],
    )
}

impl ReEncryption {
    /// Checks the transformation against `capsule` alone; needs no keys.
    pub fn verify_transform(&self, capsule: &Capsule) -> bool {
        let p = &self.proof;
        let h = proof_challenge(
            capsule,
            &self.e_prime,
            &self.v_prime,
            &self.precursor,
            &p.commitment,
            &p.e2,
            &p.v2,
            &p.u2,
        );
        capsule.e * p.z == p.e2 + self.e_prime * h
            && capsule.v * p.z == p.v2 + self.v_prime * h
            && *group::aux_generator() * p.z == p.u2 + p.commitment * h
    }

    /// Transformation check plus the delegator's signature over the
    /// delegation metadata for the given key pair.
    pub fn verify(&self, capsule: &Capsule, delegator: &PublicKey, delegatee: &PublicKey) -> bool {
        self.verify_transform(capsule) && self.metadata_signed_by(delegator, delegatee)
    }

    fn metadata_signed_by(&self, delegator: &PublicKey, delegatee: &PublicKey) -> bool {
        delegator.verify(
            &metadata_message(
                &self.proof.key_id,
                delegator,
                delegatee,
                &self.proof.commitment,
                &self.precursor,
            ),
            &self.proof.key_signature,
        )
    }
}

impl Canonical for ReEncryption {
    fn encode(&self, enc: &mut Encoder) {
        group::encode_point(enc, &self.e_prime);
        group::encode_point(enc, &self.v_prime);
        group::encode_point(enc, &self.precursor);
        enc.put(&self.proof);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            e_prime: group::decode_point(dec)?,
            v_prime: group::decode_point(dec)?,
            precursor: group::decode_point(dec)?,
            proof: dec.get()?,
        })
    }
}

/// Proxy re-encryption. Takes no secret key: the proxy only ever sees the
/// delegation key and the capsule, never the payload or any private key.
pub fn reencrypt<R: CryptoRngCore + ?Sized>(
    dk: &DelegationKey,
    capsule: &Capsule,
    rng: &mut R,
) -> Result<ReEncryption, PreError> {
    if !capsule.verify() {
        return Err(PreError::CapsuleInvalid);
    }
    if !dk.is_consistent() {
        return Err(PreError::DelegationKeyInvalid);
    }
    let e_prime = capsule.e * dk.rk;
    let v_prime = capsule.v * dk.rk;
    let t = group::random_nonzero_scalar(rng)?;
    let e2 = capsule.e * t;
    let v2 = capsule.v * t;
    let u2 = *group::aux_generator() * t;
    let h = proof_challenge(
        capsule,
        &e_prime,
        &v_prime,
        &dk.precursor,
        &dk.commitment,
        &e2,
        &v2,
        &u2,
    );
    Ok(ReEncryption {
        e_prime,
        v_prime,
        precursor: dk.precursor,
        proof: ReEncryptionProof {
            key_id: dk.id,
            commitment: dk.commitment,
            e2,
            v2,
            u2,
            z: t + h * dk.rk,
            key_signature: dk.signature,
        },
    })
}

/// Delegatee decryption.
///
/// `ReEncryptionInvalid` means `re` is not a transformation of `ct`'s
/// capsule. `DecryptionFailed` means the supplied keys do not match the
/// delegation: wrong delegatee secret, wrong delegator public key, or a
/// payload that fails authentication.
pub fn decrypt_reencrypted(
    delegatee: &SecretKey,
    delegator: &PublicKey,
    re: &ReEncryption,
    ct: &Ciphertext,
) -> Result<Vec<u8>, PreError> {
    let capsule = &ct.capsule;
    if !capsule.verify() {
        return Err(PreError::CapsuleInvalid);
    }
    if !re.verify_transform(capsule) {
        return Err(PreError::ReEncryptionInvalid);
    }
    let delegatee_pk = delegatee.public_key();
    if !re.metadata_signed_by(delegator, &delegatee_pk) {
        return Err(PreError::DecryptionFailed);
    }
    let dh_point = re.precursor * delegatee.scalar();
    let d = blinding_factor(&re.precursor, &delegatee_pk, &dh_point);
    // s·pk_A == d·(V' + h·E') ties the re-encryption to the delegator's key.
    let h = Capsule::challenge(&capsule.e, &capsule.v);
    if *delegator.point() * capsule.s != (re.v_prime + re.e_prime * h) * d {
        return Err(PreError::DecryptionFailed);
    }
    let shared = (re.e_prime + re.v_prime) * d;
    dem::open(
        &shared,
        &ct.payload,
        &Ciphertext::aad(capsule, &ct.associated_data),
    )
}
