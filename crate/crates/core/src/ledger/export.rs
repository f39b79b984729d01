use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{verify_chain, Block, ChainConfig, ChainVerdict, InvalidReason, Ledger, LedgerError};
use super::Registration;
use crate::codec::{decode_hex_strict, Canonical, DecodeError};
use crate::pre::PublicKey;
use crate::stakeholder::Role;

#[derive(Debug, Error)]
#[error("line {line}: {source}")]
pub struct ImportError {
    /// Zero-based line index, equal to the height the line should hold.
    pub line: usize,
    #[source]
    pub source: DecodeError,
}

/// One lowercase-hex canonical block per line.
pub fn export_chain(chain: &[Block]) -> String {
    let mut out = String::new();
    for block in chain {
        out.push_str(&hex::encode(block.to_bytes()));
        out.push('\n');
    }
    out
}

fn parse_line(line: &str) -> Result<Block, DecodeError> {
    Block::from_bytes(&decode_hex_strict(line)?)
}

fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.strip_suffix('\n').unwrap_or(text).split('\n')
}

pub fn import_chain(text: &str) -> Result<Vec<Block>, ImportError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    lines(text)
        .enumerate()
        .map(|(line, s)| parse_line(s).map_err(|source| ImportError { line, source }))
        .collect()
}

/// Verifies an exported chain. A line that fails to decode is reported as
/// invalid at that line's height, unless an earlier block is already invalid.
pub fn verify_chain_text(text: &str) -> ChainVerdict {
    let mut blocks = Vec::new();
    let mut malformed = None;
    if !text.is_empty() {
        for (line, s) in lines(text).enumerate() {
            match parse_line(s) {
                Ok(block) => blocks.push(block),
                Err(_) => {
                    malformed = Some(line as u64);
                    break;
                }
            }
        }
    }
    match (verify_chain(&blocks), malformed) {
        (ChainVerdict::Valid, Some(height)) => ChainVerdict::Invalid {
            height,
            reason: InvalidReason::Malformed,
        },
        (ChainVerdict::Invalid { reason: InvalidReason::EmptyChain, .. }, Some(height)) => {
            ChainVerdict::Invalid {
                height,
                reason: InvalidReason::Malformed,
            }
        }
        (verdict, _) => verdict,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenesisAccount {
    /// Compressed public key, lowercase hex.
    pub public_key: String,
    #[serde(default)]
    pub role: Option<Role>,
}

/// TOML genesis configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenesisFile {
    #[serde(flatten)]
    pub config: ChainConfig,
    #[serde(default)]
    pub accounts: Vec<GenesisAccount>,
}

impl GenesisFile {
    pub fn parse(text: &str) -> Result<Self, LedgerError> {
        toml::from_str(text).map_err(|e| LedgerError::InvalidGenesis(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("genesis serializes")
    }

    pub fn registrations(&self) -> Result<Vec<Registration>, LedgerError> {
        self.accounts
            .iter()
            .map(|a| {
                let bytes = decode_hex_strict(&a.public_key)
                    .map_err(|e| LedgerError::InvalidGenesis(e.to_string()))?;
                let public_key = PublicKey::from_bytes(&bytes)
                    .map_err(|e| LedgerError::InvalidGenesis(e.to_string()))?;
                Ok(Registration {
                    public_key,
                    role: a.role,
                })
            })
            .collect()
    }

    pub fn build(&self) -> Result<Ledger, LedgerError> {
        Ledger::new(self.config, self.registrations()?)
    }
}
