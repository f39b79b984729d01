use std::fmt;

use serde::Serialize;

use super::{ApplyFault, ApplyMode, Block, Ledger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InvalidReason {
    EmptyChain,
    /// Line could not be decoded as a block.
    Malformed,
    HashMismatch,
    HeightMismatch,
    PrevHashMismatch,
    TimestampTooEarly,
    BadGenesis,
    UnexpectedEmptyBlock,
    DuplicateRegistration,
    UnknownSender,
    BadSignature,
    BadNonce,
    OutcomeMismatch,
    StateRootMismatch,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum ChainVerdict {
    Valid,
    Invalid { height: u64, reason: InvalidReason },
}

impl ChainVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainVerdict::Valid)
    }
}

impl fmt::Display for ChainVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainVerdict::Valid => f.write_str("valid"),
            ChainVerdict::Invalid { height, reason } => {
                write!(f, "invalid at height {height}: {reason}")
            }
        }
    }
}

/// Rebuilds the ledger by re-executing every block from genesis, checking
/// hash links, signatures, nonces, recorded outcomes and state roots.
pub fn replay(chain: &[Block]) -> Result<Ledger, (u64, InvalidReason)> {
    let genesis = chain.first().ok_or((0, InvalidReason::EmptyChain))?;
    if genesis.hash != genesis.compute_hash() {
        return Err((0, InvalidReason::HashMismatch));
    }
    let config = match genesis.genesis {
        Some(config)
            if genesis.height == 0
                && genesis.timestamp == 0
                && genesis.prev_hash == [0u8; 32]
                && genesis.txs.is_empty() =>
        {
            config
        }
        _ => return Err((0, InvalidReason::BadGenesis)),
    };
    let mut ledger = Ledger::new(config, genesis.registrations.clone())
        .map_err(|_| (0, InvalidReason::DuplicateRegistration))?;
    if ledger.head().hash != genesis.hash {
        return Err((0, InvalidReason::StateRootMismatch));
    }

    for (index, block) in chain.iter().enumerate().skip(1) {
        let head = ledger.head();
        let expected_height = index as u64;
        let fail = |reason| Err((expected_height, reason));
        if block.hash != block.compute_hash() {
            return fail(InvalidReason::HashMismatch);
        }
        if block.height != expected_height {
            return fail(InvalidReason::HeightMismatch);
        }
        if block.prev_hash != head.hash {
            return fail(InvalidReason::PrevHashMismatch);
        }
        if block.timestamp < ledger.next_block_time() {
            return fail(InvalidReason::TimestampTooEarly);
        }
        if block.genesis.is_some() {
            return fail(InvalidReason::BadGenesis);
        }
        if config.skip_empty && block.is_empty() {
            return fail(InvalidReason::UnexpectedEmptyBlock);
        }

        let txs: Vec<_> = block.txs.iter().map(|i| i.tx.clone()).collect();
        let outcomes = ledger
            .apply_body(block.height, &block.registrations, &txs, ApplyMode::Replay)
            .map_err(|fault| {
                let reason = match fault {
                    ApplyFault::DuplicateRegistration => InvalidReason::DuplicateRegistration,
                    ApplyFault::UnknownSender(_) => InvalidReason::UnknownSender,
                    ApplyFault::BadSignature(_) => InvalidReason::BadSignature,
                    ApplyFault::BadNonce(_) => InvalidReason::BadNonce,
                };
                (expected_height, reason)
            })?;
        if outcomes
            .iter()
            .zip(&block.txs)
            .any(|(got, included)| *got != included.outcome)
        {
            return fail(InvalidReason::OutcomeMismatch);
        }
        if ledger.state_root() != block.state_root {
            return fail(InvalidReason::StateRootMismatch);
        }
        ledger.chain.push(block.clone());
    }
    Ok(ledger)
}

/// Reports the first discrepancy found by [`replay`].
pub fn verify_chain(chain: &[Block]) -> ChainVerdict {
    match replay(chain) {
        Ok(_) => ChainVerdict::Valid,
        Err((height, reason)) => ChainVerdict::Invalid { height, reason },
    }
}
