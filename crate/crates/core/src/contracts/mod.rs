//! The six contract state machines.
//!
//! Every instance is bound at creation to a `(sender, recipient)` address
//! pair. Methods authorize by comparing the transaction sender with the party
//! the instance designates for that method. Execution is a pure function of
//! `(state, call)`: a rejected call leaves the instance untouched.

mod call;
mod exec;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::ledger::Address;

pub use call::Call;
pub use exec::{execute, ExecContext, MAX_DESCRIPTION_LEN, MAX_PURPOSE_LEN};
pub use state::{
    AccessEvent, ConsentRequest, ConsentState, ContractInstance, ContractState,
    MedicationControlState, PrescriptionRecord, PrescriptionState, Report, ReportState,
    RewardState, Sale, SalesState, Transfer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContractKind {
    Prescription,
    Consent,
    Sales,
    MedicationControl,
    Report,
    Reward,
}

impl ContractKind {
    pub const ALL: [ContractKind; 6] = [
        ContractKind::Prescription,
        ContractKind::Consent,
        ContractKind::Sales,
        ContractKind::MedicationControl,
        ContractKind::Report,
        ContractKind::Reward,
    ];

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContractKind::Prescription => "prescription",
            ContractKind::Consent => "consent",
            ContractKind::Sales => "sales",
            ContractKind::MedicationControl => "medication_control",
            ContractKind::Report => "report",
            ContractKind::Reward => "reward",
        }
    }
}

impl fmt::Display for ContractKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Canonical for ContractKind {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.tag());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = dec.u8()?;
        Self::from_tag(tag).ok_or(DecodeError::InvalidTag { what: "contract kind", tag })
    }
}

/// A prescription item; each is encrypted under its own capsule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Item {
    /// Personal information.
    Pi,
    /// Medication and dosage.
    Med,
    /// Diagnosis.
    Dia,
}

impl Item {
    pub const ALL: [Item; 3] = [Item::Pi, Item::Med, Item::Dia];

    pub fn as_str(self) -> &'static str {
        match self {
            Item::Pi => "PI",
            Item::Med => "MED",
            Item::Dia => "DIA",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Item {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PI" => Ok(Item::Pi),
            "MED" => Ok(Item::Med),
            "DIA" => Ok(Item::Dia),
            _ => Err(format!("unknown item {s:?}")),
        }
    }
}

impl Serialize for Item {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl Canonical for Item {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(*self as u8);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = dec.u8()?;
        Self::from_tag(tag).ok_or(DecodeError::InvalidTag { what: "item", tag })
    }
}

/// Subset of `{PI, MED, DIA}` stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ItemSet(u8);

impl ItemSet {
    pub const EMPTY: ItemSet = ItemSet(0);
    pub const ALL: ItemSet = ItemSet(0b111);

    pub fn contains(self, item: Item) -> bool {
        self.0 & item.bit() != 0
    }

    pub fn insert(&mut self, item: Item) {
        self.0 |= item.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn intersection(self, other: ItemSet) -> ItemSet {
        ItemSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Item> {
        Item::ALL.into_iter().filter(move |i| self.contains(*i))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::ALL.0 == 0).then_some(ItemSet(bits))
    }
}

impl FromIterator<Item> for ItemSet {
    fn from_iter<T: IntoIterator<Item = Item>>(iter: T) -> Self {
        let mut set = ItemSet::EMPTY;
        for item in iter {
            set.insert(item);
        }
        set
    }
}

impl fmt::Display for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        let names: Vec<_> = self.iter().map(Item::as_str).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for ItemSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s == "-" {
            return Ok(ItemSet::EMPTY);
        }
        s.split(',').map(|p| p.trim().parse::<Item>()).collect()
    }
}

impl Serialize for ItemSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl Canonical for ItemSet {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = dec.u8()?;
        Self::from_bits(tag).ok_or(DecodeError::InvalidTag { what: "item set", tag })
    }
}

/// Consent request identifier, derived from the requesting transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId(pub u64);

impl RequestId {
    pub fn derive(sender: &Address, nonce: u64) -> Self {
        RequestId(crate::ledger::derive_id(b"rxledger/request", sender, nonce))
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for RequestId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Canonical for RequestId {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.u64().map(RequestId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Granted,
    Denied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestStatus {
    Pending,
    Granted,
    Denied,
}

impl From<Decision> for RequestStatus {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Granted => RequestStatus::Granted,
            Decision::Denied => RequestStatus::Denied,
        }
    }
}

impl Canonical for RequestStatus {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(*self as u8);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(RequestStatus::Pending),
            1 => Ok(RequestStatus::Granted),
            2 => Ok(RequestStatus::Denied),
            tag => Err(DecodeError::InvalidTag { what: "request status", tag }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Instantiate,
    CreatePrescription,
    RecordAccess,
    RequestDelegation,
    SetConsent,
    SellMedication,
    SupplyMedications,
    UpdateMedicationsSold,
    CreateReport,
    SendReward,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Instantiate,
        Method::CreatePrescription,
        Method::RecordAccess,
        Method::RequestDelegation,
        Method::SetConsent,
        Method::SellMedication,
        Method::SupplyMedications,
        Method::UpdateMedicationsSold,
        Method::CreateReport,
        Method::SendReward,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Instantiate => "instantiate",
            Method::CreatePrescription => "create_prescription",
            Method::RecordAccess => "record_access",
            Method::RequestDelegation => "request_delegation",
            Method::SetConsent => "set_consent",
            Method::SellMedication => "sell_medication",
            Method::SupplyMedications => "supply_medications",
            Method::UpdateMedicationsSold => "update_medications_sold",
            Method::CreateReport => "create_report",
            Method::SendReward => "send_reward",
        }
    }

    /// Contract kind the method belongs to; `None` for instantiation.
    pub fn kind(self) -> Option<ContractKind> {
        match self {
            Method::Instantiate => None,
            Method::CreatePrescription | Method::RecordAccess => Some(ContractKind::Prescription),
            Method::RequestDelegation | Method::SetConsent => Some(ContractKind::Consent),
            Method::SellMedication => Some(ContractKind::Sales),
            Method::SupplyMedications | Method::UpdateMedicationsSold => {
                Some(ContractKind::MedicationControl)
            }
            Method::CreateReport => Some(ContractKind::Report),
            Method::SendReward => Some(ContractKind::Reward),
        }
    }

    /// Which party of the instance may call the method.
    pub fn caller(self) -> Caller {
        match self {
            Method::Instantiate | Method::RecordAccess | Method::RequestDelegation => Caller::Anyone,
            Method::SetConsent | Method::UpdateMedicationsSold => Caller::Recipient,
            Method::CreatePrescription
            | Method::SellMedication
            | Method::SupplyMedications
            | Method::CreateReport
            | Method::SendReward => Caller::Sender,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ContractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or(ContractError::UnknownMethod)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Caller {
    Sender,
    Recipient,
    Anyone,
}

/// Per-transaction contract failure. Codes are part of the block encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum ContractError {
    #[error("unknown contract method")]
    UnknownMethod,
    #[error("unknown contract instance")]
    UnknownInstance,
    #[error("method not supported by this contract kind")]
    WrongKind,
    #[error("address is not registered")]
    UnknownAddress,
    #[error("sender is not authorized for this method")]
    UnauthorizedSender,
    #[error("payload is malformed")]
    MalformedPayload,
    #[error("prescription already created")]
    AlreadyCreated,
    #[error("prescription not created yet")]
    NotCreated,
    #[error("unknown prescription item")]
    UnknownItem,
    #[error("purpose exceeds 64 bytes")]
    PurposeTooLong,
    #[error("requested item set is empty")]
    EmptyItems,
    #[error("unknown consent request")]
    UnknownRequest,
    #[error("consent request already decided")]
    AlreadyDecided,
    #[error("grants do not match the requested items")]
    GrantItemMismatch,
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("units sold would exceed units supplied")]
    ExceedsSupply,
    #[error("description exceeds 2048 bytes")]
    DescriptionTooLong,
    #[error("insufficient token balance")]
    InsufficientBalance,
    #[error("instance already exists")]
    InstanceExists,
    #[error("arithmetic overflow")]
    Overflow,
}

impl ContractError {
    const ALL: [ContractError; 20] = [
        ContractError::UnknownMethod,
        ContractError::UnknownInstance,
        ContractError::WrongKind,
        ContractError::UnknownAddress,
        ContractError::UnauthorizedSender,
        ContractError::MalformedPayload,
        ContractError::AlreadyCreated,
        ContractError::NotCreated,
        ContractError::UnknownItem,
        ContractError::PurposeTooLong,
        ContractError::EmptyItems,
        ContractError::UnknownRequest,
        ContractError::AlreadyDecided,
        ContractError::GrantItemMismatch,
        ContractError::ZeroAmount,
        ContractError::ExceedsSupply,
        ContractError::DescriptionTooLong,
        ContractError::InsufficientBalance,
        ContractError::InstanceExists,
        ContractError::Overflow,
    ];

    pub fn code(self) -> u16 {
        Self::ALL.iter().position(|e| *e == self).expect("listed") as u16 + 1
    }

    pub fn from_code(code: u16) -> Option<Self> {
        code.checked_sub(1)
            .and_then(|i| Self::ALL.get(i as usize).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            ContractError::UnknownMethod => "UnknownMethod",
            ContractError::UnknownInstance => "UnknownInstance",
            ContractError::WrongKind => "WrongKind",
            ContractError::UnknownAddress => "UnknownAddress",
            ContractError::UnauthorizedSender => "UnauthorizedSender",
            ContractError::MalformedPayload => "MalformedPayload",
            ContractError::AlreadyCreated => "AlreadyCreated",
            ContractError::NotCreated => "NotCreated",
            ContractError::UnknownItem => "UnknownItem",
            ContractError::PurposeTooLong => "PurposeTooLong",
            ContractError::EmptyItems => "EmptyItems",
            ContractError::UnknownRequest => "UnknownRequest",
            ContractError::AlreadyDecided => "AlreadyDecided",
            ContractError::GrantItemMismatch => "GrantItemMismatch",
            ContractError::ZeroAmount => "ZeroAmount",
            ContractError::ExceedsSupply => "ExceedsSupply",
            ContractError::DescriptionTooLong => "DescriptionTooLong",
            ContractError::InsufficientBalance => "InsufficientBalance",
            ContractError::InstanceExists => "InstanceExists",
            ContractError::Overflow => "Overflow",
        }
    }
}

#[cfg(test)]
mod tests;
