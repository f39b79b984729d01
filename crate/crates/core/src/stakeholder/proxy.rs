use rand_core::CryptoRngCore;

use crate::pre::{self, Capsule, DelegationKey, PreError, ReEncryption};

/// The in-application proxy. Its only inputs are the delegation key and the
/// capsule; it never holds a secret key.
pub fn proxy_reencrypt<R: CryptoRngCore + ?Sized>(
    dk: &DelegationKey,
    capsule: &Capsule,
    rng: &mut R,
) -> Result<ReEncryption, PreError> {
    pre::reencrypt(dk, capsule, rng)
}
