//! Deterministic single-process ledger.
//!
//! Transactions are authenticated on submission (registered sender, valid
//! signature, next nonce, known instance) and queued in arrival order. A block
//! is produced once the simulated clock passes the configured interval; each
//! queued transaction is executed against the contracts and committed with
//! its outcome, failed or not. Consensus is not modelled beyond the
//! interval.

mod block;
mod export;
mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::contracts::{self, ContractInstance, ExecContext, Method};
use crate::pre::PublicKey;
use crate::stakeholder::Role;

pub use block::{
    Block, ChainConfig, Hash32, IncludedTx, Registration, SignedTransaction, TxOutcome,
    DEFAULT_BLOCK_INTERVAL_MS, ETHEREUM_BLOCK_INTERVAL_MS,
};
pub use export::{
    export_chain, import_chain, verify_chain_text, GenesisAccount, GenesisFile, ImportError,
};
pub use verify::{replay, verify_chain, ChainVerdict, InvalidReason};

/// Truncated SHA-256 of the compressed public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn from_public_key(pk: &PublicKey) -> Self {
        let digest = Sha256::digest(pk.to_bytes());
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[..20]);
        Address(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, DecodeError> {
        let bytes = crate::codec::decode_hex_strict(s)?;
        bytes
            .try_into()
            .map(Address)
            .map_err(|_| DecodeError::NonCanonical("address must be 20 bytes"))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl Canonical for Address {
    fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.fixed().map(Address)
    }
}

pub(crate) fn derive_id(tag: &[u8], sender: &Address, nonce: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(tag);
    hasher.update(sender.0);
    hasher.update(nonce.to_be_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Contract instance identifier, derived from the instantiating
/// transaction's `(sender, nonce)` so clients know it before commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId(pub u64);

impl InstanceId {
    pub fn derive(sender: &Address, nonce: u64) -> Self {
        InstanceId(derive_id(b"rxledger/instance", sender, nonce))
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 16 {
            return None;
        }
        let bytes = crate::codec::decode_hex_strict(s).ok()?;
        Some(InstanceId(u64::from_be_bytes(bytes.try_into().ok()?)))
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for InstanceId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Canonical for InstanceId {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.u64().map(InstanceId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub public_key: PublicKey,
    pub role: Option<Role>,
    /// Next nonce expected by block application.
    pub nonce: u64,
    /// Next nonce expected by submission (includes queued transactions).
    pending_nonce: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("public key already registered")]
    AlreadyRegistered,
    #[error("not found")]
    NotFound,
    #[error("invalid genesis: {0}")]
    InvalidGenesis(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error("sender is not a registered account")]
    UnknownSender,
    #[error("signature does not verify for the sender")]
    BadSignature,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("unknown contract instance")]
    UnknownInstance,
}

impl SubmitError {
    pub fn name(self) -> &'static str {
        match self {
            SubmitError::UnknownSender => "UnknownSender",
            SubmitError::BadSignature => "BadSignature",
            SubmitError::BadNonce { .. } => "BadNonce",
            SubmitError::UnknownInstance => "UnknownInstance",
        }
    }
}

/// Protocol violation found while applying a block body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ApplyFault {
    DuplicateRegistration,
    UnknownSender(usize),
    BadSignature(usize),
    BadNonce(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ApplyMode {
    Live,
    Replay,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    config: ChainConfig,
    chain: Vec<Block>,
    mempool: Vec<SignedTransaction>,
    pending_registrations: Vec<Registration>,
    accounts: BTreeMap<Address, Account>,
    instances: BTreeMap<InstanceId, ContractInstance>,
    pending_instances: BTreeSet<InstanceId>,
    instance_hashes: BTreeMap<InstanceId, Hash32>,
}

fn instance_hash(instance: &ContractInstance) -> Hash32 {
    let mut hasher = Sha256::new();
    hasher.update(b"rxledger/instance/v1");
    hasher.update(instance.to_bytes());
    hasher.finalize().into()
}

impl Ledger {
    /// Creates the genesis block with the given accounts.
    pub fn new(config: ChainConfig, accounts: Vec<Registration>) -> Result<Self, LedgerError> {
        let mut ledger = Self::empty(config);
        ledger
            .apply_registrations(&accounts, ApplyMode::Replay)
            .map_err(|_| LedgerError::InvalidGenesis("duplicate account".into()))?;
        let genesis = Block {
            height: 0,
            timestamp: 0,
            prev_hash: [0u8; 32],
            genesis: Some(config),
            registrations: accounts,
            txs: Vec::new(),
            state_root: ledger.state_root(),
            hash: [0u8; 32],
        }
        .seal();
        ledger.chain.push(genesis);
        Ok(ledger)
    }

    fn empty(config: ChainConfig) -> Self {
        Self {
            config,
            chain: Vec::new(),
            mempool: Vec::new(),
            pending_registrations: Vec::new(),
            accounts: BTreeMap::new(),
            instances: BTreeMap::new(),
            pending_instances: BTreeSet::new(),
            instance_hashes: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> ChainConfig {
        self.config
    }

    pub fn register_account(&mut self, pk: PublicKey) -> Result<Address, LedgerError> {
        self.register(Registration {
            public_key: pk,
            role: None,
        })
    }

    pub fn register_stakeholder(&mut self, pk: PublicKey, role: Role) -> Result<Address, LedgerError> {
        self.register(Registration {
            public_key: pk,
            role: Some(role),
        })
    }

    /// The account is usable for submissions at once and is committed in the
    /// next block.
    pub fn register(&mut self, registration: Registration) -> Result<Address, LedgerError> {
        let address = registration.address();
        if self.accounts.contains_key(&address) {
            return Err(LedgerError::AlreadyRegistered);
        }
        self.accounts.insert(
            address,
            Account {
                public_key: registration.public_key,
                role: registration.role,
                nonce: 0,
                pending_nonce: 0,
            },
        );
        self.pending_registrations.push(registration);
        Ok(address)
    }

    pub fn account(&self, address: &Address) -> Option<&Account> {
        self.accounts.get(address)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&Address, &Account)> {
        self.accounts.iter()
    }

    /// Nonce the next submission from `address` must carry.
    pub fn next_nonce(&self, address: &Address) -> Option<u64> {
        self.accounts.get(address).map(|a| a.pending_nonce)
    }

    pub fn submit_transaction(&mut self, tx: SignedTransaction) -> Result<(), SubmitError> {
        let account = self
            .accounts
            .get(&tx.sender)
            .ok_or(SubmitError::UnknownSender)?;
        if !tx.verify_signature(&account.public_key) {
            return Err(SubmitError::BadSignature);
        }
        if tx.nonce != account.pending_nonce {
            return Err(SubmitError::BadNonce {
                expected: account.pending_nonce,
                got: tx.nonce,
            });
        }
        let known = self.instances.contains_key(&tx.instance)
            || self.pending_instances.contains(&tx.instance);
        let creates = tx.method() == Some(Method::Instantiate);
        if creates {
            if known || tx.instance != InstanceId::derive(&tx.sender, tx.nonce) {
                return Err(SubmitError::UnknownInstance);
            }
        } else if !known {
            return Err(SubmitError::UnknownInstance);
        }

        self.accounts
            .get_mut(&tx.sender)
            .expect("checked above")
            .pending_nonce += 1;
        if creates {
            self.pending_instances.insert(tx.instance);
        }
        self.mempool.push(tx);
        Ok(())
    }

    pub fn mempool(&self) -> &[SignedTransaction] {
        &self.mempool
    }

    /// Simulated time at which the next block may be produced.
    pub fn next_block_time(&self) -> u64 {
        self.head().timestamp.saturating_add(self.config.block_interval_ms)
    }

    /// Commits the queued transactions if `now` has reached the next block
    /// boundary. In skip-empty mode an empty queue produces nothing.
    pub fn produce_block(&mut self, now: u64) -> Option<&Block> {
        if now < self.next_block_time() {
            return None;
        }
        let registrations = std::mem::take(&mut self.pending_registrations);
        let txs = std::mem::take(&mut self.mempool);
        if self.config.skip_empty && registrations.is_empty() && txs.is_empty() {
            return None;
        }
        let head = self.head();
        let height = head.height + 1;
        let prev_hash = head.hash;
        let outcomes = self
            .apply_body(height, &registrations, &txs, ApplyMode::Live)
            .expect("transactions were validated on submission");
        self.pending_instances.clear();
        let block = Block {
            height,
            timestamp: now,
            prev_hash,
            genesis: None,
            registrations,
            txs: txs
                .into_iter()
                .zip(outcomes)
                .map(|(tx, outcome)| IncludedTx { tx, outcome })
                .collect(),
            state_root: self.state_root(),
            hash: [0u8; 32],
        }
        .seal();
        self.chain.push(block);
        self.chain.last()
    }

    /// Produces a block exactly at the next boundary.
    pub fn produce_next_block(&mut self) -> Option<&Block> {
        let now = self.next_block_time();
        self.produce_block(now)
    }

    fn apply_registrations(
        &mut self,
        registrations: &[Registration],
        mode: ApplyMode,
    ) -> Result<(), ApplyFault> {
        for reg in registrations {
            let address = reg.address();
            match (self.accounts.get(&address), mode) {
                (Some(existing), ApplyMode::Live) if existing.public_key == reg.public_key => {}
                (Some(_), _) => return Err(ApplyFault::DuplicateRegistration),
                (None, _) => {
                    self.accounts.insert(
                        address,
                        Account {
                            public_key: reg.public_key,
                            role: reg.role,
                            nonce: 0,
                            pending_nonce: 0,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    fn apply_body(
        &mut self,
        height: u64,
        registrations: &[Registration],
        txs: &[SignedTransaction],
        mode: ApplyMode,
    ) -> Result<Vec<TxOutcome>, ApplyFault> {
        self.apply_registrations(registrations, mode)?;
        let mut touched = BTreeSet::new();
        let mut outcomes = Vec::with_capacity(txs.len());
        for (index, tx) in txs.iter().enumerate() {
            let account = self
                .accounts
                .get_mut(&tx.sender)
                .ok_or(ApplyFault::UnknownSender(index))?;
            if !tx.verify_signature(&account.public_key) {
                return Err(ApplyFault::BadSignature(index));
            }
            if tx.nonce != account.nonce {
                return Err(ApplyFault::BadNonce(index));
            }
            account.nonce += 1;
            account.pending_nonce = account.pending_nonce.max(account.nonce);

            let accounts = &self.accounts;
            let is_registered = |a: &Address| accounts.contains_key(a);
            let ctx = ExecContext {
                sender: tx.sender,
                nonce: tx.nonce,
                height,
                instance: tx.instance,
                is_registered: &is_registered,
            };
            let result = contracts::execute(&mut self.instances, &ctx, &tx.method, &tx.payload);
            if result.is_ok() {
                touched.insert(tx.instance);
            }
            outcomes.push(result.into());
        }
        for id in touched {
            let hash = instance_hash(&self.instances[&id]);
            self.instance_hashes.insert(id, hash);
        }
        Ok(outcomes)
    }

    /// Hash over every instance hash in id order.
    pub fn state_root(&self) -> Hash32 {
        let mut hasher = Sha256::new();
        hasher.update(b"rxledger/state-root/v1");
        hasher.update((self.instance_hashes.len() as u64).to_be_bytes());
        for (id, hash) in &self.instance_hashes {
            hasher.update(id.0.to_be_bytes());
            hasher.update(hash);
        }
        hasher.finalize().into()
    }

    pub fn get_state(&self, id: InstanceId) -> Result<&ContractInstance, LedgerError> {
        self.instances.get(&id).ok_or(LedgerError::NotFound)
    }

    pub fn instances(&self) -> &BTreeMap<InstanceId, ContractInstance> {
        &self.instances
    }

    pub fn get_block(&self, height: u64) -> Result<&Block, LedgerError> {
        usize::try_from(height)
            .ok()
            .and_then(|h| self.chain.get(h))
            .ok_or(LedgerError::NotFound)
    }

    pub fn head(&self) -> &Block {
        self.chain.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.head().height
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }
}
