//! Known-answer vectors for the PRE encryption path.
//!
//! A record is one line of four lowercase hex fields separated by `, `:
//! the 32-byte RNG seed, the compressed public key generated from it, and
//! SHA-256 digests of the plaintext and of the canonical ciphertext. Every
//! value is drawn from a ChaCha20 stream seeded with the record seed, in
//! the order key pair, plaintext length, plaintext bytes, encryption.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{decode_hex_strict, Canonical};
use crate::pre::{decrypt_original, encrypt, keygen, PreError};

/// Upper bound (exclusive) on generated plaintext lengths.
pub const MAX_PLAINTEXT: u32 = 4096;

/// Associated data bound into every vector's ciphertext.
pub const KAT_AD: &[u8] = b"rxledger/kat/v1";

pub const FIXTURE: &str = include_str!("../fixtures/pre_kat.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KatRecord {
    pub seed: [u8; 32],
    pub public_key: [u8; 33],
    pub plaintext_hash: [u8; 32],
    pub ciphertext_hash: [u8; 32],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {field} differs (expected {expected}, computed {computed})")]
    Mismatch {
        line: usize,
        field: &'static str,
        expected: String,
        computed: String,
    },
    #[error("line {line}: {source}")]
    Pre { line: usize, source: PreError },
}

/// The i-th fixture seed.
pub fn seed_for(index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"rxledger/kat-seed/v1");
    h.update(index.to_be_bytes());
    h.finalize().into()
}

impl KatRecord {
    pub fn generate(seed: [u8; 32]) -> Result<KatRecord, PreError> {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let keys = keygen(&mut rng)?;
        let len = (rng.next_u32() % MAX_PLAINTEXT) as usize;
        let mut plaintext = vec![0u8; len];
        rng.fill_bytes(&mut plaintext);
        let ct = encrypt(&keys.public, &plaintext, KAT_AD, &mut rng)?;
        debug_assert_eq!(decrypt_original(&keys.secret, &ct)?, plaintext);
        Ok(KatRecord {
            seed,
            public_key: keys.public.to_bytes(),
            plaintext_hash: Sha256::digest(&plaintext).into(),
            ciphertext_hash: Sha256::digest(ct.to_bytes()).into(),
        })
    }
}

impl fmt::Display for KatRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {}, {}",
            hex::encode(self.seed),
            hex::encode(self.public_key),
            hex::encode(self.plaintext_hash),
            hex::encode(self.ciphertext_hash)
        )
    }
}

fn field<const N: usize>(s: &str, name: &str) -> Result<[u8; N], String> {
    let bytes = decode_hex_strict(s).map_err(|e| format!("{name}: {e}"))?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| format!("{name}: expected {N} bytes, got {}", b.len()))
}

impl FromStr for KatRecord {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(", ").collect();
        let [seed, pk, pt, ct] = parts[..] else {
            return Err(format!("expected 4 fields, got {}", parts.len()));
        };
        Ok(KatRecord {
            seed: field(seed, "seed")?,
            public_key: field(pk, "pk")?,
            plaintext_hash: field(pt, "plaintext_hash")?,
            ciphertext_hash: field(ct, "ciphertext_hash")?,
        })
    }
}

/// Parses a fixture, skipping blank lines and `#` comments.
pub fn parse(text: &str) -> Result<Vec<(usize, KatRecord)>, KatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map(|r| (i + 1, r))
                .map_err(|message| KatError::Parse { line: i + 1, message })
        })
        .collect()
}

pub fn render(records: &[KatRecord]) -> String {
    let mut out = String::from("# seed, pk, plaintext_hash, ciphertext_hash\n");
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Regenerates every record from its seed and compares all fields.
pub fn check(text: &str) -> Result<usize, KatError> {
    let records = parse(text)?;
    for (line, expected) in &records {
        let computed =
            KatRecord::generate(expected.seed).map_err(|source| KatError::Pre { line: *line, source })?;
        let fields: [(&'static str, &[u8], &[u8]); 3] = [
            ("pk", &expected.public_key, &computed.public_key),
            ("plaintext_hash", &expected.plaintext_hash, &computed.plaintext_hash),
            ("ciphertext_hash", &expected.ciphertext_hash, &computed.ciphertext_hash),
        ];
        for (field, want, got) in fields {
            if want != got {
                return Err(KatError::Mismatch {
                    line: *line,
                    field,
                    expected: hex::encode(want),
                    computed: hex::encode(got),
                });
            }
        }
    }
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixture_matches() {
        assert_eq!(check(FIXTURE).unwrap(), 16);
    }

    #[test]
    fn record_text_round_trip() {
        let r = KatRecord::generate(seed_for(3)).unwrap();
        assert_eq!(r.to_string().parse::<KatRecord>().unwrap(), r);
    }

    #[test]
    fn tampered_fixture_reports_line_and_field() {
        let r = KatRecord::generate(seed_for(0)).unwrap();
        let mut bad = r;
        bad.ciphertext_hash[0] ^= 1;
        let text = format!("# header\n{r}\n{bad}\n");
        match check(&text) {
            Err(KatError::Mismatch { line, field, .. }) => {
                assert_eq!((line, field), (3, "ciphertext_hash"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let r = KatRecord::generate(seed_for(0)).unwrap().to_string();
        for bad in [
            r.replacen(", ", ",", 1),
            r.to_uppercase(),
            r[2..].to_string(),
            format!("{r}, 00"),
        ] {
            assert!(matches!(parse(&bad), Err(KatError::Parse { line: 1, .. })), "{bad}");
        }
    }
}
