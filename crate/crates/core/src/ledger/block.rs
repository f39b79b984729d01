use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Address, InstanceId};
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::contracts::{Call, ContractError, Method};
use crate::pre::{PublicKey, SecretKey, SIGNATURE_LEN};
use crate::stakeholder::Role;

pub type Hash32 = [u8; 32];

/// Simulated Uni Juno average block time.
pub const DEFAULT_BLOCK_INTERVAL_MS: u64 = 6130;
/// Simulated Ethereum testnet mining time.
pub const ETHEREUM_BLOCK_INTERVAL_MS: u64 = 12000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub block_interval_ms: u64,
    #[serde(default)]
    pub skip_empty: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            block_interval_ms: DEFAULT_BLOCK_INTERVAL_MS,
            skip_empty: false,
        }
    }
}

impl ChainConfig {
    pub fn ethereum() -> Self {
        Self {
            block_interval_ms: ETHEREUM_BLOCK_INTERVAL_MS,
            skip_empty: false,
        }
    }
}

impl Canonical for ChainConfig {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.block_interval_ms).bool(self.skip_empty);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            block_interval_ms: dec.u64()?,
            skip_empty: dec.bool()?,
        })
    }
}

/// Account registration carried by the block that commits it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    pub public_key: PublicKey,
    pub role: Option<Role>,
}

impl Registration {
    pub fn address(&self) -> Address {
        Address::from_public_key(&self.public_key)
    }
}

impl Canonical for Registration {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.public_key).put(&self.role);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            public_key: dec.get()?,
            role: dec.get()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTransaction {
    pub sender: Address,
    pub nonce: u64,
    pub instance: InstanceId,
    pub method: String,
    pub payload: Vec<u8>,
    pub signature: [u8; SIGNATURE_LEN],
}

fn signing_bytes(
    sender: &Address,
    nonce: u64,
    instance: InstanceId,
    method: &str,
    payload: &[u8],
) -> Vec<u8> {
    let mut enc = Encoder::with_capacity(64 + payload.len());
    enc.fixed(b"rxledger/tx/v1")
        .put(sender)
        .u64(nonce)
        .put(&instance)
        .str(method)
        .bytes(payload);
    enc.finish()
}

impl SignedTransaction {
    pub fn sign(sk: &SecretKey, nonce: u64, instance: InstanceId, call: &Call) -> Self {
        Self::sign_raw(sk, nonce, instance, call.method().as_str(), call.encode_payload())
    }

    /// Signs arbitrary method bytes; used for tests that exercise dispatch.
    pub fn sign_raw(
        sk: &SecretKey,
        nonce: u64,
        instance: InstanceId,
        method: &str,
        payload: Vec<u8>,
    ) -> Self {
        let sender = Address::from_public_key(&sk.public_key());
        let signature = sk.sign(&signing_bytes(&sender, nonce, instance, method, &payload));
        Self {
            sender,
            nonce,
            instance,
            method: method.to_string(),
            payload,
            signature,
        }
    }

    pub fn verify_signature(&self, pk: &PublicKey) -> bool {
        Address::from_public_key(pk) == self.sender
            && pk.verify(
                &signing_bytes(
                    &self.sender,
                    self.nonce,
                    self.instance,
                    &self.method,
                    &self.payload,
                ),
                &self.signature,
            )
    }

    pub fn call(&self) -> Result<Call, ContractError> {
        Call::decode(self.method.parse()?, &self.payload)
    }

    pub fn method(&self) -> Option<Method> {
        self.method.parse().ok()
    }

    pub fn hash(&self) -> Hash32 {
        Sha256::digest(self.to_bytes()).into()
    }
}

impl Canonical for SignedTransaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.sender)
            .u64(self.nonce)
            .put(&self.instance)
            .str(&self.method)
            .bytes(&self.payload)
            .fixed(&self.signature);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            sender: dec.get()?,
            nonce: dec.u64()?,
            instance: dec.get()?,
            method: dec.str()?,
            payload: dec.bytes()?,
            signature: dec.fixed()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Applied,
    Failed(ContractError),
}

impl TxOutcome {
    pub fn is_applied(self) -> bool {
        self == TxOutcome::Applied
    }
}

impl From<Result<(), ContractError>> for TxOutcome {
    fn from(r: Result<(), ContractError>) -> Self {
        match r {
            Ok(()) => TxOutcome::Applied,
            Err(e) => TxOutcome::Failed(e),
        }
    }
}

impl Canonical for TxOutcome {
    fn encode(&self, enc: &mut Encoder) {
        enc.u16(match self {
            TxOutcome::Applied => 0,
            TxOutcome::Failed(e) => e.code(),
        });
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u16()? {
            0 => Ok(TxOutcome::Applied),
            code => ContractError::from_code(code)
                .map(TxOutcome::Failed)
                .ok_or(DecodeError::NonCanonical("unknown outcome code")),
        }
    }
}

/// A transaction as committed, with its execution result. Failed
/// transactions stay on-chain so the audit trail records attempts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncludedTx {
    pub tx: SignedTransaction,
    pub outcome: TxOutcome,
}

impl Canonical for IncludedTx {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.tx).put(&self.outcome);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            tx: dec.get()?,
            outcome: dec.get()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub timestamp: u64,
    pub prev_hash: Hash32,
    /// Present on the genesis block only.
    pub genesis: Option<ChainConfig>,
    pub registrations: Vec<Registration>,
    pub txs: Vec<IncludedTx>,
    pub state_root: Hash32,
    /// Seal over every other field.
    pub hash: Hash32,
}

impl Block {
    fn encode_unsealed(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .u64(self.timestamp)
            .fixed(&self.prev_hash)
            .put(&self.genesis)
            .seq(&self.registrations)
            .seq(&self.txs)
            .fixed(&self.state_root);
    }

    pub fn compute_hash(&self) -> Hash32 {
        let mut enc = Encoder::new();
        enc.fixed(b"rxledger/block/v1");
        self.encode_unsealed(&mut enc);
        Sha256::digest(enc.as_slice()).into()
    }

    pub fn seal(mut self) -> Self {
        self.hash = self.compute_hash();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty() && self.registrations.is_empty()
    }
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_unsealed(enc);
        enc.fixed(&self.hash);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            height: dec.u64()?,
            timestamp: dec.u64()?,
            prev_hash: dec.fixed()?,
            genesis: dec.get()?,
            registrations: dec.seq()?,
            txs: dec.seq()?,
            state_root: dec.fixed()?,
            hash: dec.fixed()?,
        })
    }
}
