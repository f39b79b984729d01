use std::collections::BTreeMap;

use super::{ContractError, ContractKind, Decision, Item, ItemSet, Method, RequestId};
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::ledger::{Address, InstanceId};
use crate::pre::{Ciphertext, PublicKey};

/// A typed contract call. `encode_payload` and `decode` define the canonical
/// payload bytes for each method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    /// `mint` seeds the creator's balance and must be zero for every kind
    /// other than `Reward`.
    Instantiate {
        kind: ContractKind,
        recipient: Address,
        mint: u64,
    },
    CreatePrescription {
        c_pi: Ciphertext,
        c_med: Ciphertext,
        c_dia: Ciphertext,
    },
    RecordAccess {
        item: Item,
        purpose: String,
    },
    RequestDelegation {
        requester_pk: PublicKey,
        items: ItemSet,
    },
    SetConsent {
        request_id: RequestId,
        decision: Decision,
        grants: BTreeMap<Item, Vec<u8>>,
    },
    SellMedication {
        medication_name: String,
        dosage: String,
        price: u64,
        prescription_ref: InstanceId,
    },
    SupplyMedications {
        amount: u64,
    },
    UpdateMedicationsSold {
        amount: u64,
    },
    CreateReport {
        description: String,
    },
    SendReward {
        to: Address,
        amount: u64,
    },
}

impl Call {
    pub fn method(&self) -> Method {
        match self {
            Call::Instantiate { .. } => Method::Instantiate,
            Call::CreatePrescription { .. } => Method::CreatePrescription,
            Call::RecordAccess { .. } => Method::RecordAccess,
            Call::RequestDelegation { .. } => Method::RequestDelegation,
            Call::SetConsent { .. } => Method::SetConsent,
            Call::SellMedication { .. } => Method::SellMedication,
            Call::SupplyMedications { .. } => Method::SupplyMedications,
            Call::UpdateMedicationsSold { .. } => Method::UpdateMedicationsSold,
            Call::CreateReport { .. } => Method::CreateReport,
            Call::SendReward { .. } => Method::SendReward,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            Call::Instantiate {
                kind,
                recipient,
                mint,
            } => {
                enc.put(kind).put(recipient).u64(*mint);
            }
            Call::CreatePrescription {
                c_pi,
                c_med,
                c_dia,
            } => {
                enc.put(c_pi).put(c_med).put(c_dia);
            }
            Call::RecordAccess { item, purpose } => {
                enc.put(item).str(purpose);
            }
            Call::RequestDelegation {
                requester_pk,
                items,
            } => {
                enc.put(requester_pk).put(items);
            }
            Call::SetConsent {
                request_id,
                decision,
                grants,
            } => {
                enc.put(request_id).bool(*decision == Decision::Granted);
                enc.u32(grants.len() as u32);
                for (item, blob) in grants {
                    enc.put(item).bytes(blob);
                }
            }
            Call::SellMedication {
                medication_name,
                dosage,
                price,
                prescription_ref,
            } => {
                enc.str(medication_name)
                    .str(dosage)
                    .u64(*price)
                    .put(prescription_ref);
            }
            Call::SupplyMedications { amount } | Call::UpdateMedicationsSold { amount } => {
                enc.u64(*amount);
            }
            Call::CreateReport { description } => {
                enc.str(description);
            }
            Call::SendReward { to, amount } => {
                enc.put(to).u64(*amount);
            }
        }
        enc.finish()
    }

    pub fn decode(method: Method, payload: &[u8]) -> Result<Call, ContractError> {
        let mut dec = Decoder::new(payload);
        let call = decode_body(method, &mut dec).map_err(|e| match (method, e) {
            (Method::RecordAccess, DecodeError::InvalidTag { what: "item", .. }) => {
                ContractError::UnknownItem
            }
            _ => ContractError::MalformedPayload,
        })?;
        dec.finish().map_err(|_| ContractError::MalformedPayload)?;
        Ok(call)
    }
}

struct GrantBlob(Item, Vec<u8>);

impl Canonical for GrantBlob {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.0).bytes(&self.1);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(GrantBlob(dec.get()?, dec.bytes()?))
    }
}

fn decode_body(method: Method, dec: &mut Decoder<'_>) -> Result<Call, DecodeError> {
    Ok(match method {
        Method::Instantiate => Call::Instantiate {
            kind: dec.get()?,
            recipient: dec.get()?,
            mint: dec.u64()?,
        },
        Method::CreatePrescription => Call::CreatePrescription {
            c_pi: dec.get()?,
            c_med: dec.get()?,
            c_dia: dec.get()?,
        },
        Method::RecordAccess => Call::RecordAccess {
            item: dec.get()?,
            purpose: dec.str()?,
        },
        Method::RequestDelegation => Call::RequestDelegation {
            requester_pk: dec.get()?,
            items: dec.get()?,
        },
        Method::SetConsent => {
            let request_id = dec.get()?;
            let decision = if dec.bool()? {
                Decision::Granted
            } else {
                Decision::Denied
            };
            let mut grants = BTreeMap::new();
            for GrantBlob(item, blob) in dec.seq::<GrantBlob>()? {
                if grants.last_key_value().is_some_and(|(last, _)| *last >= item) {
                    return Err(DecodeError::NonCanonical("grant items not strictly ascending"));
                }
                grants.insert(item, blob);
            }
            Call::SetConsent {
                request_id,
                decision,
                grants,
            }
        }
        Method::SellMedication => Call::SellMedication {
            medication_name: dec.str()?,
            dosage: dec.str()?,
            price: dec.u64()?,
            prescription_ref: dec.get()?,
        },
        Method::SupplyMedications => Call::SupplyMedications { amount: dec.u64()? },
        Method::UpdateMedicationsSold => Call::UpdateMedicationsSold { amount: dec.u64()? },
        Method::CreateReport => Call::CreateReport {
            description: dec.str()?,
        },
        Method::SendReward => Call::SendReward {
            to: dec.get()?,
            amount: dec.u64()?,
        },
    })
}
