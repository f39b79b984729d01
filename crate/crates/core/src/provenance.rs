//! Audit reconstruction from committed blocks.
//!
//! Every function here folds over the chain itself and never consults live
//! contract state, so an exported chain file can be audited offline. The
//! chain must pass [`verify_chain`](crate::ledger::verify_chain) first;
//! results on an unverified chain are meaningless.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contracts::{
    AccessEvent, Call, ContractKind, Decision, Item, ItemSet, Method, RequestId, RequestStatus,
};
use crate::ledger::{Address, Block, InstanceId, TxOutcome};
use crate::stakeholder::{compliance, ComplianceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProvenanceError {
    #[error("unknown instance {0}")]
    UnknownInstance(InstanceId),
    #[error("instance {0} is not a {1} contract")]
    WrongKind(InstanceId, ContractKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Origin {
    pub doctor: Address,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrantDigest {
    pub item: Item,
    /// SHA-256 of the encrypted delegation key stored on-chain.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConsentRecord {
    pub consent_instance: InstanceId,
    pub request_id: RequestId,
    pub requester: Address,
    pub items_requested: ItemSet,
    pub items_granted: ItemSet,
    pub status: RequestStatus,
    pub requested_at: u64,
    pub decided_at: Option<u64>,
    pub grants: Vec<GrantDigest>,
}

/// A committed transaction that the contract rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedTx {
    pub sender: Address,
    pub method: String,
    pub error: &'static str,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineageRecord {
    pub prescription_id: InstanceId,
    pub patient: Address,
    pub origin: Option<Origin>,
    pub accesses: Vec<AccessEvent>,
    pub consents: Vec<ConsentRecord>,
    pub rejected: Vec<RejectedTx>,
}

#[derive(Debug, Clone, Default)]
struct InstanceTrail {
    kind: Option<ContractKind>,
    sender: Option<Address>,
    recipient: Option<Address>,
    created_at: u64,
    origin: Option<Origin>,
    accesses: Vec<AccessEvent>,
    consents: Vec<ConsentRecord>,
    supplied: u64,
    sold: u64,
    sales: u64,
    rejected: Vec<RejectedTx>,
}

/// Per-instance trails folded from a chain.
#[derive(Debug, Clone, Default)]
pub struct ChainIndex {
    instances: BTreeMap<InstanceId, InstanceTrail>,
}

fn digest(blob: &[u8]) -> String {
    hex::encode(Sha256::digest(blob))
}

impl ChainIndex {
    pub fn build(chain: &[Block]) -> Self {
        let mut index = ChainIndex::default();
        for block in chain {
            for included in &block.txs {
                index.fold(block.height, &included.tx, included.outcome);
            }
        }
        index
    }

    fn fold(&mut self, height: u64, tx: &crate::ledger::SignedTransaction, outcome: TxOutcome) {
        let Some(method) = tx.method() else {
            return;
        };
        if let TxOutcome::Failed(error) = outcome {
            if let Some(trail) = self.instances.get_mut(&tx.instance) {
                trail.rejected.push(RejectedTx {
                    sender: tx.sender,
                    method: tx.method.clone(),
                    error: error.name(),
                    height,
                });
            }
            return;
        }
        if method == Method::CreatePrescription {
            let trail = self.instances.entry(tx.instance).or_default();
            trail.origin = Some(Origin {
                doctor: tx.sender,
                height,
            });
            trail.accesses.push(AccessEvent {
                accessor: tx.sender,
                item: None,
                purpose: "create".to_string(),
                height,
            });
            return;
        }
        let Ok(call) = tx.call() else {
            return;
        };
        let trail = self.instances.entry(tx.instance).or_default();
        match call {
            Call::Instantiate {
                kind, recipient, ..
            } => {
                trail.kind = Some(kind);
                trail.sender = Some(tx.sender);
                trail.recipient = Some(recipient);
                trail.created_at = height;
            }
            Call::RecordAccess { item, purpose } => trail.accesses.push(AccessEvent {
                accessor: tx.sender,
                item: Some(item),
                purpose,
                height,
            }),
            Call::RequestDelegation { items, .. } => trail.consents.push(ConsentRecord {
                consent_instance: tx.instance,
                request_id: RequestId::derive(&tx.sender, tx.nonce),
                requester: tx.sender,
                items_requested: items,
                items_granted: ItemSet::EMPTY,
                status: RequestStatus::Pending,
                requested_at: height,
                decided_at: None,
                grants: Vec::new(),
            }),
            Call::SetConsent {
                request_id,
                decision,
                grants,
            } => {
                if let Some(record) = trail.consents.iter_mut().find(|r| r.request_id == request_id) {
                    record.status = decision.into();
                    record.decided_at = Some(height);
                    if decision == Decision::Granted {
                        record.items_granted = grants.keys().copied().collect();
                        record.grants = grants
                            .iter()
                            .map(|(item, blob)| GrantDigest {
                                item: *item,
                                sha256: digest(blob),
                            })
                            .collect();
                    }
                }
            }
            Call::SellMedication { .. } => trail.sales += 1,
            Call::SupplyMedications { amount } => trail.supplied += amount,
            Call::UpdateMedicationsSold { amount } => trail.sold += amount,
            Call::CreatePrescription { .. } | Call::CreateReport { .. } | Call::SendReward { .. } => {}
        }
    }

    fn trail(&self, id: InstanceId, kind: ContractKind) -> Result<&InstanceTrail, ProvenanceError> {
        let trail = self
            .instances
            .get(&id)
            .filter(|t| t.kind.is_some())
            .ok_or(ProvenanceError::UnknownInstance(id))?;
        if trail.kind != Some(kind) {
            return Err(ProvenanceError::WrongKind(id, kind));
        }
        Ok(trail)
    }

    pub fn instances(&self) -> impl Iterator<Item = (InstanceId, ContractKind)> + '_ {
        self.instances
            .iter()
            .filter_map(|(id, t)| t.kind.map(|k| (*id, k)))
    }

    pub fn access_history(&self, prescription: InstanceId) -> Result<Vec<AccessEvent>, ProvenanceError> {
        Ok(self.trail(prescription, ContractKind::Prescription)?.accesses.clone())
    }

    pub fn consent_history(&self, consent: InstanceId) -> Result<Vec<ConsentRecord>, ProvenanceError> {
        Ok(self.trail(consent, ContractKind::Consent)?.consents.clone())
    }

    /// Consents from every consent instance the patient owns, in instance
    /// creation order.
    pub fn lineage(&self, prescription: InstanceId) -> Result<LineageRecord, ProvenanceError> {
        let trail = self.trail(prescription, ContractKind::Prescription)?;
        let patient = trail.recipient.expect("instantiated");
        let mut owned: Vec<_> = self
            .instances
            .values()
            .filter(|t| t.kind == Some(ContractKind::Consent) && t.recipient == Some(patient))
            .collect();
        owned.sort_by_key(|t| t.created_at);
        Ok(LineageRecord {
            prescription_id: prescription,
            patient,
            origin: trail.origin.clone(),
            accesses: trail.accesses.clone(),
            consents: owned.into_iter().flat_map(|t| t.consents.clone()).collect(),
            rejected: trail.rejected.clone(),
        })
    }

    pub fn compliance_report(
        &self,
        control: InstanceId,
        sales: InstanceId,
    ) -> Result<ComplianceReport, ProvenanceError> {
        let c = self.trail(control, ContractKind::MedicationControl)?;
        let s = self.trail(sales, ContractKind::Sales)?;
        Ok(compliance(c.supplied, c.sold, s.sales))
    }
}

pub fn access_history(chain: &[Block], prescription: InstanceId) -> Result<Vec<AccessEvent>, ProvenanceError> {
    ChainIndex::build(chain).access_history(prescription)
}

pub fn consent_history(chain: &[Block], consent: InstanceId) -> Result<Vec<ConsentRecord>, ProvenanceError> {
    ChainIndex::build(chain).consent_history(consent)
}

pub fn lineage(chain: &[Block], prescription: InstanceId) -> Result<LineageRecord, ProvenanceError> {
    ChainIndex::build(chain).lineage(prescription)
}

pub fn compliance_report(
    chain: &[Block],
    control: InstanceId,
    sales: InstanceId,
) -> Result<ComplianceReport, ProvenanceError> {
    ChainIndex::build(chain).compliance_report(control, sales)
}

impl LineageRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lineage serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "prescription {}", self.prescription_id);
        let _ = writeln!(out, "patient      {}", self.patient);
        match &self.origin {
            Some(o) => {
                let _ = writeln!(out, "origin       doctor {} at height {}", o.doctor, o.height);
            }
            None => {
                let _ = writeln!(out, "origin       not created");
            }
        }
        let _ = writeln!(out, "accesses ({})", self.accesses.len());
        for e in &self.accesses {
            let item = e.item.map_or("ALL", Item::as_str);
            let _ = writeln!(out, "  h={:<6} {} {:<3} {}", e.height, e.accessor, item, e.purpose);
        }
        let _ = writeln!(out, "consents ({})", self.consents.len());
        for c in &self.consents {
            let decided = c.decided_at.map_or("-".to_string(), |h| h.to_string());
            let _ = writeln!(
                out,
                "  request {} from {} requested {} granted {} status {:?} at h={} decided h={}",
                c.request_id,
                c.requester,
                c.items_requested,
                c.items_granted,
                c.status,
                c.requested_at,
                decided
            );
        }
        if !self.rejected.is_empty() {
            let _ = writeln!(out, "rejected ({})", self.rejected.len());
            for r in &self.rejected {
                let _ = writeln!(out, "  h={:<6} {} {} {}", r.height, r.sender, r.method, r.error);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::contracts::ContractError;
    use crate::ledger::{ChainConfig, Ledger};
    use crate::stakeholder::{derive_seed, shared, Role, StakeholderContext};

    fn ctx(role: Role, name: &str, ledger: &crate::stakeholder::LedgerHandle) -> StakeholderContext {
        StakeholderContext::from_seed(role, derive_seed(&[b"prov", name.as_bytes()]), ledger.clone())
            .unwrap()
    }

    #[test]
    fn histories_follow_the_chain() {
        let ledger = shared(Ledger::new(ChainConfig::default(), vec![]).unwrap());
        let mut doctor = ctx(Role::Doctor, "d", &ledger);
        let mut patient = ctx(Role::Patient, "p", &ledger);
        let mut pharmacy = ctx(Role::Pharmacy, "ph", &ledger);
        let mut regulator = ctx(Role::Regulator, "r", &ledger);
        let consent = patient.patient_open_consent().unwrap();
        let pk = patient.public_key();
        let rx = doctor.doctor_create_prescription(&pk, b"pi", b"m;1;2", b"dia").unwrap();

        {
            let chain = ledger.lock().unwrap().chain().to_vec();
            let only_creation = access_history(&chain, rx).unwrap();
            assert_eq!(only_creation.len(), 1);
            assert_eq!(consent_history(&chain, consent).unwrap(), vec![]);
        }

        let med: ItemSet = [Item::Med].into_iter().collect();
        let granted = pharmacy.consumer_request_access(consent, med).unwrap();
        let denied = regulator.consumer_request_access(consent, [Item::Dia].into_iter().collect()).unwrap();
        patient
            .patient_handle_requests(consent, &BTreeSet::from([granted, denied]))
            .unwrap();
        for _ in 0..3 {
            pharmacy.consumer_complete_access(consent, rx, granted, Item::Med, "dispense").unwrap();
        }
        let bad = pharmacy.call(
            rx,
            Call::RecordAccess {
                item: Item::Med,
                purpose: "p".repeat(100),
            },
        );
        assert_eq!(bad.unwrap_err().name(), ContractError::PurposeTooLong.name());

        let l = ledger.lock().unwrap();
        let chain = l.chain();
        let index = ChainIndex::build(chain);
        let accesses = index.access_history(rx).unwrap();
        assert_eq!(accesses.len(), 4);
        assert_eq!(
            &accesses,
            &l.get_state(rx).unwrap().state.as_prescription().unwrap().last_access
        );
        let consents = index.consent_history(consent).unwrap();
        assert_eq!(consents.len(), 2);
        assert_eq!(consents[0].status, RequestStatus::Granted);
        assert_eq!(consents[1].status, RequestStatus::Denied);
        let blob = l
            .get_state(consent)
            .unwrap()
            .state
            .as_consent()
            .unwrap()
            .grant(granted, Item::Med)
            .unwrap()
            .to_vec();
        assert_eq!(consents[0].grants, vec![GrantDigest {
            item: Item::Med,
            sha256: digest(&blob)
        }]);

        let lineage = index.lineage(rx).unwrap();
        assert_eq!(lineage.origin.as_ref().unwrap().doctor, doctor.address());
        assert_eq!(lineage.accesses, accesses);
        assert_eq!(lineage.consents, consents);
        assert_eq!(lineage.rejected.len(), 1);
        assert!(lineage.to_text().contains("PurposeTooLong"));
        assert!(lineage.to_json().contains("\"prescription_id\""));

        assert_eq!(
            index.access_history(InstanceId(1)),
            Err(ProvenanceError::UnknownInstance(InstanceId(1)))
        );
        assert_eq!(
            index.access_history(consent),
            Err(ProvenanceError::WrongKind(consent, ContractKind::Prescription))
        );
    }

    #[test]
    fn compliance_from_chain() {
        let ledger = shared(Ledger::new(ChainConfig::default(), vec![]).unwrap());
        let mut pharmacy = ctx(Role::Pharmacy, "ph", &ledger);
        let mut regulator = ctx(Role::Regulator, "r", &ledger);
        let sales = pharmacy.open(ContractKind::Sales, regulator.address(), 0).unwrap();
        let control = regulator
            .open(ContractKind::MedicationControl, pharmacy.address(), 0)
            .unwrap();
        let chain = ledger.lock().unwrap().chain().to_vec();
        assert_eq!(compliance_report(&chain, control, sales).unwrap(), compliance(0, 0, 0));

        regulator.regulator_supply(control, 100).unwrap();
        for i in 0..31 {
            pharmacy
                .call(
                    sales,
                    Call::SellMedication {
                        medication_name: "m".into(),
                        dosage: "d".into(),
                        price: 1,
                        prescription_ref: InstanceId(i),
                    },
                )
                .unwrap();
        }
        pharmacy.call(control, Call::UpdateMedicationsSold { amount: 30 }).unwrap();
        let _ = pharmacy.call(control, Call::UpdateMedicationsSold { amount: 71 });
        let chain = ledger.lock().unwrap().chain().to_vec();
        let from_chain = compliance_report(&chain, control, sales).unwrap();
        assert_eq!(from_chain, regulator.regulator_verify_compliance(control, sales).unwrap());
        assert_eq!(from_chain, compliance(100, 30, 31));
        assert!(!from_chain.consistent);
    }
}
