use k256::{ProjectivePoint, Scalar};
use rand_core::CryptoRngCore;

use super::group::{self, point_to_bytes, scalar_to_bytes};
use super::keys::{PublicKey, SecretKey, SIGNATURE_LEN};
use super::PreError;
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};

/// Single re-encryption key fragment `rk = a · d⁻¹` where
/// `d = H(X, pk_B, x·pk_B)` and `X = x·G` is the precursor.
///
/// `commitment = rk·U` lets the proxy and verifiers check `rk` without the
/// delegator; `signature` is the delegator's signature over the public
/// metadata `(id, pk_A, pk_B, commitment, precursor)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelegationKey {
    pub(crate) id: Scalar,
    pub(crate) rk: Scalar,
    pub(crate) precursor: ProjectivePoint,
    pub(crate) commitment: ProjectivePoint,
    pub(crate) signature: [u8; SIGNATURE_LEN],
}

pub(crate) fn metadata_message(
    id: &Scalar,
    delegator: &PublicKey,
    delegatee: &PublicKey,
    commitment: &ProjectivePoint,
    precursor: &ProjectivePoint,
) -> Vec<u8> {
    let mut enc = Encoder::with_capacity(16 + 32 + 4 * 33);
    enc.fixed(b"rxledger/dk/v1")
        .fixed(&scalar_to_bytes(id))
        .fixed(&delegator.to_bytes())
        .fixed(&delegatee.to_bytes())
        .fixed(&point_to_bytes(commitment))
        .fixed(&point_to_bytes(precursor));
    enc.finish()
}

/// DH-derived blinding factor shared by delegator and delegatee.
pub(crate) fn blinding_factor(
    precursor: &ProjectivePoint,
    delegatee: &PublicKey,
    dh_point: &ProjectivePoint,
) -> Scalar {
    group::hash_to_scalar(
        b"rxledger/dk-blind",
        &[
            &point_to_bytes(precursor),
            &delegatee.to_bytes(),
            &point_to_bytes(dh_point),
        ],
    )
}

impl DelegationKey {
    /// Checks `rk·U == commitment`; needs no keys, so the proxy can run it.
    pub fn is_consistent(&self) -> bool {
        !bool::from(self.rk.is_zero()) && *group::aux_generator() * self.rk == self.commitment
    }

    /// Full check against the claimed delegator and delegatee.
    pub fn verify(&self, delegator: &PublicKey, delegatee: &PublicKey) -> bool {
        self.is_consistent()
            && delegator.verify(
                &metadata_message(
                    &self.id,
                    delegator,
                    delegatee,
                    &self.commitment,
                    &self.precursor,
                ),
                &self.signature,
            )
    }
}

impl Canonical for DelegationKey {
    fn encode(&self, enc: &mut Encoder) {
        group::encode_scalar(enc, &self.id);
        group::encode_scalar(enc, &self.rk);
        group::encode_point(enc, &self.precursor);
        group::encode_point(enc, &self.commitment);
        enc.fixed(&self.signature);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            id: group::decode_nonzero_scalar(dec)?,
            rk: group::decode_nonzero_scalar(dec)?,
            precursor: group::decode_point(dec)?,
            commitment: group::decode_point(dec)?,
            signature: dec.fixed()?,
        })
    }
}

/// `rk_{A→B}` from the delegator's secret key and the delegatee's public key.
pub fn generate_delegation_key<R: CryptoRngCore + ?Sized>(
    delegator: &SecretKey,
    delegatee: &PublicKey,
    rng: &mut R,
) -> Result<DelegationKey, PreError> {
    let delegator_pk = delegator.public_key();
    loop {
        let x = group::random_nonzero_scalar(rng)?;
        let precursor = ProjectivePoint::GENERATOR * x;
        let d = blinding_factor(&precursor, delegatee, &(*delegatee.point() * x));
        let Some(d_inv) = Option::<Scalar>::from(d.invert()) else {
            continue;
        };
        let rk = *delegator.scalar() * d_inv;
        let id = group::random_nonzero_scalar(rng)?;
        let commitment = *group::aux_generator() * rk;
        let signature = delegator.sign(&metadata_message(
            &id,
            &delegator_pk,
            delegatee,
            &commitment,
            &precursor,
        ));
        return Ok(DelegationKey {
            id,
            rk,
            precursor,
            commitment,
            signature,
        });
    }
}
