//! Role-scoped workflows for doctors, patients, pharmacies and regulators.
//!
//! Each [`StakeholderContext`] owns one key pair and a handle to the shared
//! ledger. Operations submit their transactions, commit them in the next
//! block and surface the recorded contract outcome.

mod proxy;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::contracts::{
    Call, ContractError, ContractInstance, ContractKind, Decision, Item, ItemSet, RequestId,
    RequestStatus,
};
use crate::ledger::{
    Address, InstanceId, Ledger, LedgerError, SignedTransaction, SubmitError, TxOutcome,
};
use crate::pre::{self, Ciphertext, DelegationKey, KeyPair, PreError, PublicKey, SecretKey};

pub use proxy::proxy_reencrypt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Doctor,
    Patient,
    Pharmacy,
    Regulator,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Doctor, Role::Patient, Role::Pharmacy, Role::Regulator];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Doctor => "doctor",
            Role::Patient => "patient",
            Role::Pharmacy => "pharmacy",
            Role::Regulator => "regulator",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

impl Canonical for Role {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.tag());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = dec.u8()?;
        Role::ALL
            .get(tag as usize)
            .copied()
            .ok_or(DecodeError::InvalidTag { what: "role", tag })
    }
}

/// Which items each role may ever be granted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivacyPolicy(BTreeMap<Role, ItemSet>);

impl Default for PrivacyPolicy {
    fn default() -> Self {
        let med: ItemSet = [Item::Med].into_iter().collect();
        Self(BTreeMap::from([
            (Role::Doctor, ItemSet::ALL),
            (Role::Patient, ItemSet::ALL),
            (Role::Pharmacy, med),
            (Role::Regulator, med),
        ]))
    }
}

impl PrivacyPolicy {
    pub fn allowed(&self, role: Role) -> ItemSet {
        self.0.get(&role).copied().unwrap_or(ItemSet::EMPTY)
    }

    pub fn set(&mut self, role: Role, items: ItemSet) {
        self.0.insert(role, items);
    }

    /// Items a request may be granted: requested ∩ allowed for the role.
    pub fn effective(&self, role: Option<Role>, requested: ItemSet) -> ItemSet {
        role.map_or(ItemSet::EMPTY, |r| self.allowed(r).intersection(requested))
    }
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("operation requires role {expected}, context is {actual}")]
    WrongRole { expected: &'static str, actual: Role },
    #[error("transaction rejected: {0}")]
    Submit(#[from] SubmitError),
    #[error("contract error: {0}")]
    Contract(#[from] ContractError),
    #[error("cryptographic error: {0}")]
    Pre(#[from] PreError),
    #[error("ledger error: {0}")]
    Ledger(#[from] LedgerError),
    #[error("no grant for this request and item")]
    NoGrant,
    #[error("prescription already dispensed")]
    AlreadyDispensed,
    #[error("medication record is malformed: {0}")]
    MalformedMedication(String),
    #[error("block production was skipped")]
    NotCommitted,
}

impl WorkflowError {
    /// Stable name used in scenario expectations.
    pub fn name(&self) -> &'static str {
        match self {
            WorkflowError::WrongRole { .. } => "WrongRole",
            WorkflowError::Submit(e) => e.name(),
            WorkflowError::Contract(e) => e.name(),
            WorkflowError::Pre(e) => match e {
                PreError::CapsuleInvalid => "CapsuleInvalid",
                PreError::DelegationKeyInvalid => "DelegationKeyInvalid",
                PreError::ReEncryptionInvalid => "ReEncryptionInvalid",
                PreError::DecryptionFailed => "DecryptionFailed",
                _ => "CryptoError",
            },
            WorkflowError::Ledger(LedgerError::NotFound) => "NotFound",
            WorkflowError::Ledger(_) => "LedgerError",
            WorkflowError::NoGrant => "NoGrant",
            WorkflowError::AlreadyDispensed => "AlreadyDispensed",
            WorkflowError::MalformedMedication(_) => "MalformedMedication",
            WorkflowError::NotCommitted => "NotCommitted",
        }
    }
}

pub type LedgerHandle = Arc<Mutex<Ledger>>;

pub fn shared(ledger: Ledger) -> LedgerHandle {
    Arc::new(Mutex::new(ledger))
}

/// Medication line parsed from the decrypted MED item:
/// `name;dosage;price` on the first line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Medication {
    pub name: String,
    pub dosage: String,
    pub price: u64,
}

impl Medication {
    pub fn parse(plaintext: &[u8]) -> Result<Self, WorkflowError> {
        let bad = |m: &str| WorkflowError::MalformedMedication(m.to_string());
        let text = std::str::from_utf8(plaintext).map_err(|_| bad("not utf-8"))?;
        let line = text.lines().next().unwrap_or("");
        let mut fields = line.split(';');
        let (Some(name), Some(dosage), Some(price), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(bad("expected name;dosage;price"));
        };
        let price = price.trim().parse().map_err(|_| bad("price is not an integer"))?;
        Ok(Self {
            name: name.trim().to_string(),
            dosage: dosage.trim().to_string(),
            price,
        })
    }

    pub fn to_line(&self) -> String {
        format!("{};{};{}", self.name, self.dosage, self.price)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ComplianceReport {
    pub supplied: u64,
    pub sold: u64,
    pub sales_count: u64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsentDecision {
    pub request_id: RequestId,
    pub decision: Decision,
    pub granted: ItemSet,
}

/// Associated data binding an encrypted delegation key to its grant slot.
pub fn grant_binding(consent: InstanceId, request_id: RequestId, item: Item) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.fixed(b"rxledger/grant/v1")
        .put(&consent)
        .put(&request_id)
        .put(&item);
    enc.finish()
}

pub struct StakeholderContext {
    role: Role,
    keys: KeyPair,
    address: Address,
    ledger: LedgerHandle,
    rng: ChaCha20Rng,
    policy: PrivacyPolicy,
}

impl fmt::Debug for StakeholderContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StakeholderContext")
            .field("role", &self.role)
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

/// Derives a deterministic seed from a label, e.g. a scenario seed and an
/// actor name.
pub fn derive_seed(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"rxledger/seed/v1");
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

impl StakeholderContext {
    /// Registers `keys` on the ledger under `role`.
    pub fn register(
        role: Role,
        keys: KeyPair,
        ledger: LedgerHandle,
        rng_seed: [u8; 32],
    ) -> Result<Self, WorkflowError> {
        lock(&ledger).register_stakeholder(keys.public, role)?;
        Ok(Self::attach(role, keys, ledger, rng_seed))
    }

    /// Wraps an account that is already registered.
    pub fn attach(role: Role, keys: KeyPair, ledger: LedgerHandle, rng_seed: [u8; 32]) -> Self {
        let address = Address::from_public_key(&keys.public);
        Self {
            role,
            keys,
            address,
            ledger,
            rng: ChaCha20Rng::from_seed(rng_seed),
            policy: PrivacyPolicy::default(),
        }
    }

    /// Key pair and RNG derived from `seed`.
    pub fn from_seed(role: Role, seed: [u8; 32], ledger: LedgerHandle) -> Result<Self, WorkflowError> {
        let mut rng = ChaCha20Rng::from_seed(derive_seed(&[&seed, b"keys"]));
        let keys = pre::keygen(&mut rng)?;
        Self::register(role, keys, ledger, derive_seed(&[&seed, b"rng"]))
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public
    }

    pub fn ledger(&self) -> &LedgerHandle {
        &self.ledger
    }

    pub fn policy(&self) -> &PrivacyPolicy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: PrivacyPolicy) {
        self.policy = policy;
    }

    fn require(&self, expected: &[Role], name: &'static str) -> Result<(), WorkflowError> {
        if expected.contains(&self.role) {
            Ok(())
        } else {
            Err(WorkflowError::WrongRole {
                expected: name,
                actual: self.role,
            })
        }
    }

    fn secret(&self) -> &SecretKey {
        &self.keys.secret
    }

    /// Submits the calls in order, commits them in the next block and returns
    /// the first contract failure, if any.
    pub fn transact(&mut self, calls: Vec<(InstanceId, Call)>) -> Result<(), WorkflowError> {
        let mut ledger = lock(&self.ledger);
        let mut nonces = Vec::with_capacity(calls.len());
        for (instance, call) in &calls {
            let nonce = ledger
                .next_nonce(&self.address)
                .ok_or(SubmitError::UnknownSender)?;
            ledger.submit_transaction(SignedTransaction::sign(self.secret(), nonce, *instance, call))?;
            nonces.push(nonce);
        }
        let block = ledger.produce_next_block().ok_or(WorkflowError::NotCommitted)?;
        for nonce in nonces {
            let outcome = block
                .txs
                .iter()
                .find(|i| i.tx.sender == self.address && i.tx.nonce == nonce)
                .map(|i| i.outcome)
                .ok_or(WorkflowError::NotCommitted)?;
            if let TxOutcome::Failed(e) = outcome {
                return Err(e.into());
            }
        }
        Ok(())
    }

    pub fn call(&mut self, instance: InstanceId, call: Call) -> Result<(), WorkflowError> {
        self.transact(vec![(instance, call)])
    }

    fn next_instance_id(&self) -> Result<InstanceId, WorkflowError> {
        let nonce = lock(&self.ledger)
            .next_nonce(&self.address)
            .ok_or(SubmitError::UnknownSender)?;
        Ok(InstanceId::derive(&self.address, nonce))
    }

    /// Opens a contract instance with this context as sender.
    pub fn open(
        &mut self,
        kind: ContractKind,
        recipient: Address,
        mint: u64,
    ) -> Result<InstanceId, WorkflowError> {
        let id = self.next_instance_id()?;
        self.call(
            id,
            Call::Instantiate {
                kind,
                recipient,
                mint,
            },
        )?;
        Ok(id)
    }

    /// The patient's own consent instance.
    pub fn patient_open_consent(&mut self) -> Result<InstanceId, WorkflowError> {
        self.require(&[Role::Patient], "patient")?;
        self.open(ContractKind::Consent, self.address, 0)
    }

    pub fn snapshot(&self, instance: InstanceId) -> Result<ContractInstance, WorkflowError> {
        Ok(lock(&self.ledger).get_state(instance)?.clone())
    }

    pub fn doctor_create_prescription(
        &mut self,
        patient_pk: &PublicKey,
        pi: &[u8],
        med: &[u8],
        dia: &[u8],
    ) -> Result<InstanceId, WorkflowError> {
        self.require(&[Role::Doctor], "doctor")?;
        let item_ct = |item: Item, pt: &[u8], rng: &mut ChaCha20Rng| {
            pre::encrypt(patient_pk, pt, item.as_str().as_bytes(), rng)
        };
        let c_pi = item_ct(Item::Pi, pi, &mut self.rng)?;
        let c_med = item_ct(Item::Med, med, &mut self.rng)?;
        let c_dia = item_ct(Item::Dia, dia, &mut self.rng)?;
        let id = self.next_instance_id()?;
        self.transact(vec![
            (
                id,
                Call::Instantiate {
                    kind: ContractKind::Prescription,
                    recipient: Address::from_public_key(patient_pk),
                    mint: 0,
                },
            ),
            (id, Call::CreatePrescription { c_pi, c_med, c_dia }),
        ])?;
        Ok(id)
    }

    pub fn consumer_request_access(
        &mut self,
        consent: InstanceId,
        items: ItemSet,
    ) -> Result<RequestId, WorkflowError> {
        self.require(&[Role::Doctor, Role::Pharmacy, Role::Regulator], "doctor|pharmacy|regulator")?;
        let nonce = lock(&self.ledger)
            .next_nonce(&self.address)
            .ok_or(SubmitError::UnknownSender)?;
        self.call(
            consent,
            Call::RequestDelegation {
                requester_pk: self.keys.public,
                items,
            },
        )?;
        Ok(RequestId::derive(&self.address, nonce))
    }

    /// Decides the approved pending requests. Each gets one delegation key per
    /// item allowed by the privacy policy, encrypted to the requester; a
    /// request with nothing allowed is denied. Requests outside `approve` are
    /// left pending.
    pub fn patient_handle_requests(
        &mut self,
        consent: InstanceId,
        approve: &BTreeSet<RequestId>,
    ) -> Result<Vec<ConsentDecision>, WorkflowError> {
        self.require(&[Role::Patient], "patient")?;
        let (requests, roles) = {
            let ledger = lock(&self.ledger);
            let state = ledger.get_state(consent)?;
            let consent_state = state.state.as_consent().ok_or(ContractError::WrongKind)?;
            let requests: Vec<_> = consent_state
                .requests
                .iter()
                .filter(|r| r.status == RequestStatus::Pending && approve.contains(&r.id))
                .cloned()
                .collect();
            let roles: Vec<_> = requests
                .iter()
                .map(|r| ledger.account(&r.requester).and_then(|a| a.role))
                .collect();
            (requests, roles)
        };

        let mut decisions = Vec::with_capacity(requests.len());
        let mut calls = Vec::with_capacity(requests.len());
        for (request, role) in requests.iter().zip(roles) {
            let effective = self.policy.effective(role, request.items);
            let mut grants = BTreeMap::new();
            for item in effective.iter() {
                let dk = pre::generate_delegation_key(
                    &self.keys.secret,
                    &request.requester_pk,
                    &mut self.rng,
                )?;
                let blob = pre::encrypt(
                    &request.requester_pk,
                    &dk.to_bytes(),
                    &grant_binding(consent, request.id, item),
                    &mut self.rng,
                )?;
                grants.insert(item, blob.to_bytes());
            }
            let decision = if effective.is_empty() {
                Decision::Denied
            } else {
                Decision::Granted
            };
            decisions.push(ConsentDecision {
                request_id: request.id,
                decision,
                granted: effective,
            });
            calls.push((
                consent,
                Call::SetConsent {
                    request_id: request.id,
                    decision,
                    grants,
                },
            ));
        }
        if !calls.is_empty() {
            self.transact(calls)?;
        }
        Ok(decisions)
    }

    /// Fetches and opens the delegation key for `(request_id, item)`,
    /// re-encrypts the item through the proxy, decrypts it and logs the access
    /// on-chain.
    pub fn consumer_complete_access(
        &mut self,
        consent: InstanceId,
        prescription: InstanceId,
        request_id: RequestId,
        item: Item,
        purpose: &str,
    ) -> Result<Vec<u8>, WorkflowError> {
        let (blob, patient_pk, ciphertext) = {
            let ledger = lock(&self.ledger);
            let consent_instance = ledger.get_state(consent)?;
            let consent_state = consent_instance
                .state
                .as_consent()
                .ok_or(ContractError::WrongKind)?;
            let blob = consent_state
                .grant(request_id, item)
                .ok_or(WorkflowError::NoGrant)?
                .to_vec();
            let patient_pk = ledger
                .account(&consent_instance.recipient)
                .ok_or(LedgerError::NotFound)?
                .public_key;
            let rx = ledger.get_state(prescription)?;
            let record = rx
                .state
                .as_prescription()
                .ok_or(ContractError::WrongKind)?
                .record
                .as_ref()
                .ok_or(ContractError::NotCreated)?;
            (blob, patient_pk, record.item(item).clone())
        };

        let wrapped = Ciphertext::from_bytes(&blob).map_err(PreError::from)?;
        if wrapped.associated_data != grant_binding(consent, request_id, item) {
            return Err(PreError::DecryptionFailed.into());
        }
        let dk = DelegationKey::from_bytes(&pre::decrypt_original(self.secret(), &wrapped)?)
            .map_err(PreError::from)?;
        let re = proxy_reencrypt(&dk, &ciphertext.capsule, &mut self.rng)?;
        let plaintext = pre::decrypt_reencrypted(self.secret(), &patient_pk, &re, &ciphertext)?;
        self.call(
            prescription,
            Call::RecordAccess {
                item,
                purpose: purpose.to_string(),
            },
        )?;
        Ok(plaintext)
    }

    /// Sells against one prescription, once. The sale and the sold-count
    /// update are committed in the same block.
    pub fn pharmacy_dispense(
        &mut self,
        sales: InstanceId,
        control: InstanceId,
        prescription_ref: InstanceId,
        med_plaintext: &[u8],
    ) -> Result<Medication, WorkflowError> {
        self.require(&[Role::Pharmacy], "pharmacy")?;
        let medication = Medication::parse(med_plaintext)?;
        {
            let ledger = lock(&self.ledger);
            let sales_state = ledger.get_state(sales)?;
            let sales_state = sales_state.state.as_sales().ok_or(ContractError::WrongKind)?;
            let queued = ledger.mempool().iter().any(|tx| {
                tx.instance == sales
                    && matches!(
                        tx.call(),
                        Ok(Call::SellMedication { prescription_ref: r, .. }) if r == prescription_ref
                    )
            });
            if sales_state.contains_prescription(prescription_ref) || queued {
                return Err(WorkflowError::AlreadyDispensed);
            }
            let control_state = ledger.get_state(control)?;
            let control_state = control_state
                .state
                .as_medication_control()
                .ok_or(ContractError::WrongKind)?;
            if control_state.available() == 0 {
                return Err(ContractError::ExceedsSupply.into());
            }
        }
        self.transact(vec![
            (
                sales,
                Call::SellMedication {
                    medication_name: medication.name.clone(),
                    dosage: medication.dosage.clone(),
                    price: medication.price,
                    prescription_ref,
                },
            ),
            (control, Call::UpdateMedicationsSold { amount: 1 }),
        ])?;
        Ok(medication)
    }

    pub fn regulator_supply(&mut self, control: InstanceId, amount: u64) -> Result<(), WorkflowError> {
        self.require(&[Role::Regulator], "regulator")?;
        self.call(control, Call::SupplyMedications { amount })
    }

    pub fn regulator_verify_compliance(
        &self,
        control: InstanceId,
        sales: InstanceId,
    ) -> Result<ComplianceReport, WorkflowError> {
        self.require(&[Role::Regulator], "regulator")?;
        let ledger = lock(&self.ledger);
        let control_state = *ledger
            .get_state(control)?
            .state
            .as_medication_control()
            .ok_or(ContractError::WrongKind)?;
        let sales_count = ledger
            .get_state(sales)?
            .state
            .as_sales()
            .ok_or(ContractError::WrongKind)?
            .sales
            .len() as u64;
        Ok(compliance(control_state.supplied, control_state.sold, sales_count))
    }

    /// Returns the patient's balance after the reward.
    pub fn patient_report_and_reward(
        patient: &mut StakeholderContext,
        regulator: &mut StakeholderContext,
        report: InstanceId,
        reward: InstanceId,
        description: &str,
        amount: u64,
    ) -> Result<u64, WorkflowError> {
        patient.require(&[Role::Patient], "patient")?;
        regulator.require(&[Role::Regulator], "regulator")?;
        patient.call(
            report,
            Call::CreateReport {
                description: description.to_string(),
            },
        )?;
        regulator.call(
            reward,
            Call::SendReward {
                to: patient.address,
                amount,
            },
        )?;
        let balance = lock(&regulator.ledger)
            .get_state(reward)?
            .state
            .as_reward()
            .ok_or(ContractError::WrongKind)?
            .balance(&patient.address);
        Ok(balance)
    }
}

pub fn compliance(supplied: u64, sold: u64, sales_count: u64) -> ComplianceReport {
    ComplianceReport {
        supplied,
        sold,
        sales_count,
        consistent: sold <= supplied && sales_count == sold,
    }
}

fn lock(handle: &LedgerHandle) -> MutexGuard<'_, Ledger> {
    handle.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}
