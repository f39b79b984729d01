use std::collections::BTreeMap;

use serde::Serialize;

use super::{ContractKind, Item, ItemSet, RequestId, RequestStatus};
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::ledger::{Address, InstanceId};
use crate::pre::{Ciphertext, PublicKey};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractInstance {
    pub id: InstanceId,
    pub sender: Address,
    pub recipient: Address,
    pub created_at: u64,
    pub state: ContractState,
}

impl ContractInstance {
    pub fn kind(&self) -> ContractKind {
        self.state.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractState {
    Prescription(PrescriptionState),
    Consent(ConsentState),
    Sales(SalesState),
    MedicationControl(MedicationControlState),
    Report(ReportState),
    Reward(RewardState),
}

impl ContractState {
    pub fn kind(&self) -> ContractKind {
        match self {
            ContractState::Prescription(_) => ContractKind::Prescription,
            ContractState::Consent(_) => ContractKind::Consent,
            ContractState::Sales(_) => ContractKind::Sales,
            ContractState::MedicationControl(_) => ContractKind::MedicationControl,
            ContractState::Report(_) => ContractKind::Report,
            ContractState::Reward(_) => ContractKind::Reward,
        }
    }

    pub(crate) fn empty(kind: ContractKind) -> Self {
        match kind {
            ContractKind::Prescription => ContractState::Prescription(Default::default()),
            ContractKind::Consent => ContractState::Consent(Default::default()),
            ContractKind::Sales => ContractState::Sales(Default::default()),
            ContractKind::MedicationControl => ContractState::MedicationControl(Default::default()),
            ContractKind::Report => ContractState::Report(Default::default()),
            ContractKind::Reward => ContractState::Reward(Default::default()),
        }
    }

    pub fn as_prescription(&self) -> Option<&PrescriptionState> {
        match self {
            ContractState::Prescription(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_consent(&self) -> Option<&ConsentState> {
        match self {
            ContractState::Consent(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_sales(&self) -> Option<&SalesState> {
        match self {
            ContractState::Sales(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_medication_control(&self) -> Option<&MedicationControlState> {
        match self {
            ContractState::MedicationControl(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_report(&self) -> Option<&ReportState> {
        match self {
            ContractState::Report(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_reward(&self) -> Option<&RewardState> {
        match self {
            ContractState::Reward(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrescriptionRecord {
    pub c_pi: Ciphertext,
    pub c_med: Ciphertext,
    pub c_dia: Ciphertext,
    pub created_at: u64,
}

impl PrescriptionRecord {
    pub fn item(&self, item: Item) -> &Ciphertext {
        match item {
            Item::Pi => &self.c_pi,
            Item::Med => &self.c_med,
            Item::Dia => &self.c_dia,
        }
    }
}

/// `item == None` marks the creation event, which covers the whole record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessEvent {
    pub accessor: Address,
    pub item: Option<Item>,
    pub purpose: String,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PrescriptionState {
    pub record: Option<PrescriptionRecord>,
    pub last_access: Vec<AccessEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsentRequest {
    pub id: RequestId,
    pub requester: Address,
    pub requester_pk: PublicKey,
    pub items: ItemSet,
    pub granted: ItemSet,
    pub status: RequestStatus,
    pub requested_at: u64,
    pub decided_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConsentState {
    pub requests: Vec<ConsentRequest>,
    /// Delegation keys encrypted under the requester's public key.
    pub grants: BTreeMap<(RequestId, Item), Vec<u8>>,
}

impl ConsentState {
    pub fn request(&self, id: RequestId) -> Option<&ConsentRequest> {
        self.requests.iter().find(|r| r.id == id)
    }

    pub fn grant(&self, id: RequestId, item: Item) -> Option<&[u8]> {
        self.grants.get(&(id, item)).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sale {
    pub medication_name: String,
    pub dosage: String,
    pub price: u64,
    pub prescription_ref: InstanceId,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SalesState {
    pub sales: Vec<Sale>,
}

impl SalesState {
    pub fn contains_prescription(&self, rx: InstanceId) -> bool {
        self.sales.iter().any(|s| s.prescription_ref == rx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MedicationControlState {
    pub supplied: u64,
    pub sold: u64,
}

impl MedicationControlState {
    pub fn available(&self) -> u64 {
        self.supplied - self.sold
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub source: Address,
    pub description: String,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReportState {
    pub reports: Vec<Report>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub to: Address,
    pub amount: u64,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RewardState {
    pub balances: BTreeMap<Address, u64>,
    pub transfers: Vec<Transfer>,
    pub minted: u64,
}

impl RewardState {
    pub fn balance(&self, who: &Address) -> u64 {
        self.balances.get(who).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.balances.values().sum()
    }
}

// Canonical encodings. Field order below is fixed; the state root hashes it.

impl Canonical for AccessEvent {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.accessor)
            .put(&self.item)
            .str(&self.purpose)
            .u64(self.height);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            accessor: dec.get()?,
            item: dec.get()?,
            purpose: dec.str()?,
            height: dec.u64()?,
        })
    }
}

impl Canonical for PrescriptionRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.c_pi)
            .put(&self.c_med)
            .put(&self.c_dia)
            .u64(self.created_at);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            c_pi: dec.get()?,
            c_med: dec.get()?,
            c_dia: dec.get()?,
            created_at: dec.u64()?,
        })
    }
}

impl Canonical for PrescriptionState {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.record).seq(&self.last_access);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            record: dec.get()?,
            last_access: dec.seq()?,
        })
    }
}

impl Canonical for ConsentRequest {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.id)
            .put(&self.requester)
            .put(&self.requester_pk)
            .put(&self.items)
            .put(&self.granted)
            .put(&self.status)
            .u64(self.requested_at)
            .put(&self.decided_at);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            id: dec.get()?,
            requester: dec.get()?,
            requester_pk: dec.get()?,
            items: dec.get()?,
            granted: dec.get()?,
            status: dec.get()?,
            requested_at: dec.u64()?,
            decided_at: dec.get()?,
        })
    }
}

struct GrantEntry {
    request: RequestId,
    item: Item,
    blob: Vec<u8>,
}

impl Canonical for GrantEntry {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.request).put(&self.item).bytes(&self.blob);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            request: dec.get()?,
            item: dec.get()?,
            blob: dec.bytes()?,
        })
    }
}

impl Canonical for ConsentState {
    fn encode(&self, enc: &mut Encoder) {
        enc.seq(&self.requests);
        enc.u32(self.grants.len() as u32);
        for ((request, item), blob) in &self.grants {
            enc.put(request).put(item).bytes(blob);
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let requests = dec.seq()?;
        let entries: Vec<GrantEntry> = dec.seq()?;
        let mut grants = BTreeMap::new();
        for e in entries {
            if let Some((last, _)) = grants.last_key_value() {
                if *last >= (e.request, e.item) {
                    return Err(DecodeError::NonCanonical("grant keys not strictly ascending"));
                }
            }
            grants.insert((e.request, e.item), e.blob);
        }
        Ok(Self { requests, grants })
    }
}

impl Canonical for Sale {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.medication_name)
            .str(&self.dosage)
            .u64(self.price)
            .put(&self.prescription_ref)
            .u64(self.height);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            medication_name: dec.str()?,
            dosage: dec.str()?,
            price: dec.u64()?,
            prescription_ref: dec.get()?,
            height: dec.u64()?,
        })
    }
}

impl Canonical for Report {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.source).str(&self.description).u64(self.height);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            source: dec.get()?,
            description: dec.str()?,
            height: dec.u64()?,
        })
    }
}

impl Canonical for Transfer {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.to).u64(self.amount).u64(self.height);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            to: dec.get()?,
            amount: dec.u64()?,
            height: dec.u64()?,
        })
    }
}

struct Balance(Address, u64);

impl Canonical for Balance {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.0).u64(self.1);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Balance(dec.get()?, dec.u64()?))
    }
}

impl Canonical for ContractState {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.kind());
        match self {
            ContractState::Prescription(s) => {
                enc.put(s);
            }
            ContractState::Consent(s) => {
                enc.put(s);
            }
            ContractState::Sales(s) => {
                enc.seq(&s.sales);
            }
            ContractState::MedicationControl(s) => {
                enc.u64(s.supplied).u64(s.sold);
            }
            ContractState::Report(s) => {
                enc.seq(&s.reports);
            }
            ContractState::Reward(s) => {
                enc.u32(s.balances.len() as u32);
                for (who, amount) in &s.balances {
                    enc.put(who).u64(*amount);
                }
                enc.seq(&s.transfers).u64(s.minted);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.get::<ContractKind>()? {
            ContractKind::Prescription => ContractState::Prescription(dec.get()?),
            ContractKind::Consent => ContractState::Consent(dec.get()?),
            ContractKind::Sales => ContractState::Sales(SalesState { sales: dec.seq()? }),
            ContractKind::MedicationControl => {
                let supplied = dec.u64()?;
                let sold = dec.u64()?;
                if sold > supplied {
                    return Err(DecodeError::NonCanonical("sold exceeds supplied"));
                }
                ContractState::MedicationControl(MedicationControlState { supplied, sold })
            }
            ContractKind::Report => ContractState::Report(ReportState { reports: dec.seq()? }),
            ContractKind::Reward => {
                let entries: Vec<Balance> = dec.seq()?;
                let mut balances = BTreeMap::new();
                for Balance(who, amount) in entries {
                    if balances.last_key_value().is_some_and(|(last, _)| *last >= who) {
                        return Err(DecodeError::NonCanonical("balances not strictly ascending"));
                    }
                    balances.insert(who, amount);
                }
                ContractState::Reward(RewardState {
                    balances,
                    transfers: dec.seq()?,
                    minted: dec.u64()?,
                })
            }
        })
    }
}

impl Canonical for ContractInstance {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.id)
            .put(&self.sender)
            .put(&self.recipient)
            .u64(self.created_at)
            .put(&self.state);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            id: dec.get()?,
            sender: dec.get()?,
            recipient: dec.get()?,
            created_at: dec.u64()?,
            state: dec.get()?,
        })
    }
}
