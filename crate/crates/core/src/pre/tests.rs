use k256::Scalar;
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::codec::Canonical;

const KB: f64 = 1024.0;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_bytes(rng: &mut impl RngCore, len: usize) -> Vec<u8> {
    let mut buf = vec![0u8; len];
    rng.fill_bytes(&mut buf);
    buf
}

fn sized(rng: &mut ChaCha20Rng, min_kb: f64, max_kb: f64) -> Vec<u8> {
    let len = (rng.gen_range(min_kb..=max_kb) * KB).round() as usize;
    random_bytes(rng, len)
}

struct Parties {
    patient: KeyPair,
    doctor: KeyPair,
    other: KeyPair,
}

fn parties(rng: &mut ChaCha20Rng) -> Parties {
    Parties {
        patient: keygen(rng).unwrap(),
        doctor: keygen(rng).unwrap(),
        other: keygen(rng).unwrap(),
    }
}

#[test]
fn empty_plaintext_is_tag_only() {
    let mut rng = rng(1);
    let p = parties(&mut rng);
    let ct = encrypt(&p.patient.public, b"", b"", &mut rng).unwrap();
    assert!(ct.capsule.verify());
    assert_eq!(ct.payload.len(), DEM_OVERHEAD);
    assert_eq!(decrypt_original(&p.patient.secret, &ct).unwrap(), b"");
}

#[test]
fn payload_overhead_is_fixed() {
    let mut rng = rng(2);
    let p = parties(&mut rng);
    for len in [1usize, 15, 16, 17, 1000, 65_537] {
        let m = random_bytes(&mut rng, len);
        let ct = encrypt(&p.patient.public, &m, b"ad", &mut rng).unwrap();
        assert_eq!(ct.payload.len(), len + DEM_OVERHEAD);
        assert_eq!(ct.plaintext_len(), len);
    }
}

#[test]
fn round_trip_medication_sized_inputs() {
    let mut rng = rng(3);
    let p = parties(&mut rng);
    for _ in 0..1000 {
        let m = sized(&mut rng, 0.24, 0.53);
        let ct = encrypt(&p.patient.public, &m, b"MED", &mut rng).unwrap();
        assert_eq!(decrypt_original(&p.patient.secret, &ct).unwrap(), m);
    }
}

#[test]
fn wrong_key_always_fails_authentication() {
    let mut rng = rng(4);
    let p = parties(&mut rng);
    let ct = encrypt(&p.patient.public, b"diagnosis", b"DIA", &mut rng).unwrap();
    for _ in 0..1000 {
        let other = SecretKey::random(&mut rng).unwrap();
        assert_eq!(
            decrypt_original(&other, &ct),
            Err(PreError::DecryptionFailed)
        );
    }
}

#[test]
fn tampered_payload_and_capsule_are_distinguished() {
    let mut rng = rng(5);
    let p = parties(&mut rng);
    let ct = encrypt(&p.patient.public, b"personal info", b"PI", &mut rng).unwrap();

    let mut bad_payload = ct.clone();
    bad_payload.payload[3] ^= 0x01;
    assert_eq!(
        decrypt_original(&p.patient.secret, &bad_payload),
        Err(PreError::DecryptionFailed)
    );

    let mut bad_ad = ct.clone();
    bad_ad.associated_data = b"MED".to_vec();
    assert_eq!(
        decrypt_original(&p.patient.secret, &bad_ad),
        Err(PreError::DecryptionFailed)
    );

    let mut bad_capsule = ct.clone();
    bad_capsule.capsule.s += Scalar::ONE;
    assert_eq!(
        decrypt_original(&p.patient.secret, &bad_capsule),
        Err(PreError::CapsuleInvalid)
    );
}

#[test]
fn honest_delegation_key_verifies() {
    let mut rng = rng(6);
    let p = parties(&mut rng);
    let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
    assert!(dk.verify(&p.patient.public, &p.doctor.public));
    assert!(!dk.verify(&p.doctor.public, &p.patient.public));
    assert!(!dk.verify(&p.patient.public, &p.other.public));
}

#[test]
fn perturbed_delegation_key_fails() {
    let mut rng = rng(7);
    let p = parties(&mut rng);
    let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();

    let mut bumped = dk.clone();
    bumped.rk += Scalar::ONE;
    assert!(!bumped.verify(&p.patient.public, &p.doctor.public));
    let ct = encrypt(&p.patient.public, b"m", b"", &mut rng).unwrap();
    assert_eq!(
        reencrypt(&bumped, &ct.capsule, &mut rng),
        Err(PreError::DelegationKeyInvalid)
    );

    let mut new_id = dk.clone();
    new_id.id += Scalar::ONE;
    assert!(!new_id.verify(&p.patient.public, &p.doctor.public));

    let mut new_sig = dk;
    new_sig.signature[40] ^= 0x80;
    assert!(!new_sig.verify(&p.patient.public, &p.doctor.public));
}

#[test]
fn delegated_round_trip_thousand_trials() {
    let mut rng = rng(8);
    let p = parties(&mut rng);
    for _ in 0..1000 {
        let m = sized(&mut rng, 0.43, 0.82);
        let ct = encrypt(&p.patient.public, &m, b"PI", &mut rng).unwrap();
        let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
        let re = reencrypt(&dk, &ct.capsule, &mut rng).unwrap();
        assert!(re.verify(&ct.capsule, &p.patient.public, &p.doctor.public));
        let out = decrypt_reencrypted(&p.doctor.secret, &p.patient.public, &re, &ct).unwrap();
        assert_eq!(out, m);
    }
}

#[test]
fn cross_delegation_does_not_transfer() {
    // dk(A→B) applied to material encrypted for C must not open for B.
    let mut rng = rng(9);
    let p = parties(&mut rng);
    let dk_ab = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
    for _ in 0..200 {
        let ct_c = encrypt(&p.other.public, b"for C only", b"", &mut rng).unwrap();
        let re = reencrypt(&dk_ab, &ct_c.capsule, &mut rng).unwrap();
        for claimed in [&p.patient.public, &p.other.public] {
            assert_eq!(
                decrypt_reencrypted(&p.doctor.secret, claimed, &re, &ct_c),
                Err(PreError::DecryptionFailed)
            );
        }
    }
}

#[test]
fn proxy_output_useless_without_delegatee_key() {
    let mut rng = rng(10);
    let p = parties(&mut rng);
    let ct = encrypt(&p.patient.public, b"medication", b"MED", &mut rng).unwrap();
    let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
    let re = reencrypt(&dk, &ct.capsule, &mut rng).unwrap();
    for _ in 0..1000 {
        let guess = SecretKey::random(&mut rng).unwrap();
        assert_eq!(
            decrypt_reencrypted(&guess, &p.patient.public, &re, &ct),
            Err(PreError::DecryptionFailed)
        );
    }
}

#[test]
fn swapped_delegator_key_fails() {
    let mut rng = rng(11);
    let p = parties(&mut rng);
    let ct = encrypt(&p.patient.public, b"x", b"", &mut rng).unwrap();
    let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
    let re = reencrypt(&dk, &ct.capsule, &mut rng).unwrap();
    assert_eq!(
        decrypt_reencrypted(&p.doctor.secret, &p.other.public, &re, &ct),
        Err(PreError::DecryptionFailed)
    );
}

#[test]
fn reencryption_bound_to_its_capsule() {
    let mut rng = rng(12);
    let p = parties(&mut rng);
    let ct1 = encrypt(&p.patient.public, b"one", b"", &mut rng).unwrap();
    let ct2 = encrypt(&p.patient.public, b"two", b"", &mut rng).unwrap();
    let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
    let re1 = reencrypt(&dk, &ct1.capsule, &mut rng).unwrap();
    assert!(!re1.verify_transform(&ct2.capsule));
    assert_eq!(
        decrypt_reencrypted(&p.doctor.secret, &p.patient.public, &re1, &ct2),
        Err(PreError::ReEncryptionInvalid)
    );
}

#[test]
fn reencrypt_rejects_invalid_capsule() {
    let mut rng = rng(13);
    let p = parties(&mut rng);
    let mut ct = encrypt(&p.patient.public, b"x", b"", &mut rng).unwrap();
    ct.capsule.s += Scalar::ONE;
    let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
    assert_eq!(
        reencrypt(&dk, &ct.capsule, &mut rng),
        Err(PreError::CapsuleInvalid)
    );
}

#[test]
fn personal_info_sizes_through_full_chain() {
    let mut rng = rng(14);
    let p = parties(&mut rng);
    for kb in [0.43, 0.62, 0.82] {
        let m = random_bytes(&mut rng, (kb * KB) as usize);
        let ct = encrypt(&p.patient.public, &m, b"PI", &mut rng).unwrap();
        let dk = generate_delegation_key(&p.patient.secret, &p.other.public, &mut rng).unwrap();
        let re = reencrypt(&dk, &ct.capsule, &mut rng).unwrap();
        assert_eq!(
            decrypt_reencrypted(&p.other.secret, &p.patient.public, &re, &ct).unwrap(),
            m
        );
    }
}

#[test]
fn largest_diagnosis_file() {
    let mut rng = rng(15);
    let p = parties(&mut rng);
    let m = random_bytes(&mut rng, (8975.74 * KB) as usize);
    let ct = encrypt(&p.patient.public, &m, b"DIA", &mut rng).unwrap();
    assert_eq!(ct.payload.len(), m.len() + DEM_OVERHEAD);
    assert_eq!(decrypt_original(&p.patient.secret, &ct).unwrap(), m);
}

/// Flips one bit of the encoding and checks that the value either fails to
/// decode or differs from the original.
fn flipped<T: Canonical>(bytes: &[u8], bit: usize) -> Option<T> {
    let mut b = bytes.to_vec();
    b[bit / 8] ^= 1 << (bit % 8);
    T::from_bytes(&b).ok()
}

struct Fixture {
    p: Parties,
    ct: Ciphertext,
    dk: DelegationKey,
    re: ReEncryption,
}

fn fixture() -> Fixture {
    let mut rng = rng(16);
    let p = parties(&mut rng);
    let ct = encrypt(&p.patient.public, b"tamper me", b"MED", &mut rng).unwrap();
    let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
    let re = reencrypt(&dk, &ct.capsule, &mut rng).unwrap();
    Fixture { p, ct, dk, re }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_is_canonical(seed in any::<u64>(), len in 0usize..2048) {
        let mut rng = rng(seed);
        let p = parties(&mut rng);
        let m = random_bytes(&mut rng, len);
        let ct = encrypt(&p.patient.public, &m, b"ctx", &mut rng).unwrap();
        let dk = generate_delegation_key(&p.patient.secret, &p.doctor.public, &mut rng).unwrap();
        let re = reencrypt(&dk, &ct.capsule, &mut rng).unwrap();

        let ct_bytes = ct.to_bytes();
        prop_assert_eq!(Ciphertext::from_bytes(&ct_bytes).unwrap().to_bytes(), ct_bytes);
        let dk_bytes = dk.to_bytes();
        prop_assert_eq!(DelegationKey::from_bytes(&dk_bytes).unwrap(), dk);
        let re_bytes = re.to_bytes();
        prop_assert_eq!(ReEncryption::from_bytes(&re_bytes).unwrap(), re);
        let pk = p.patient.public;
        prop_assert_eq!(PublicKey::from_bytes(&pk.to_bytes()).unwrap(), pk);
    }

    #[test]
    fn any_bit_flip_in_capsule_is_detected(bit in 0usize..CAPSULE_LEN * 8) {
        let f = fixture();
        if let Some(c) = flipped::<Capsule>(&f.ct.capsule.to_bytes(), bit) {
            prop_assert!(!c.verify());
        }
    }

    #[test]
    fn any_bit_flip_in_ciphertext_is_detected(seed in any::<u64>()) {
        let f = fixture();
        let bytes = f.ct.to_bytes();
        let bit = (seed as usize) % (bytes.len() * 8);
        if let Some(ct) = flipped::<Ciphertext>(&bytes, bit) {
            prop_assert!(decrypt_original(&f.p.patient.secret, &ct).is_err());
        }
    }

    #[test]
    fn any_bit_flip_in_delegation_key_is_detected(seed in any::<u64>()) {
        let f = fixture();
        let bytes = f.dk.to_bytes();
        let bit = (seed as usize) % (bytes.len() * 8);
        if let Some(dk) = flipped::<DelegationKey>(&bytes, bit) {
            prop_assert!(!dk.verify(&f.p.patient.public, &f.p.doctor.public));
        }
    }

    #[test]
    fn any_bit_flip_in_reencryption_is_detected(seed in any::<u64>()) {
        let f = fixture();
        let bytes = f.re.to_bytes();
        let bit = (seed as usize) % (bytes.len() * 8);
        if let Some(re) = flipped::<ReEncryption>(&bytes, bit) {
            prop_assert!(!re.verify(&f.ct.capsule, &f.p.patient.public, &f.p.doctor.public));
            prop_assert!(
                decrypt_reencrypted(&f.p.doctor.secret, &f.p.patient.public, &re, &f.ct).is_err()
            );
        }
    }
}
