use std::collections::BTreeMap;

use super::state::{
    AccessEvent, ConsentRequest, ContractInstance, ContractState, PrescriptionRecord, Report,
    Sale, Transfer,
};
use super::{Call, Caller, ContractError, ContractKind, Decision, ItemSet, Method, RequestId};
use super::RequestStatus;
use crate::codec::Canonical;
use crate::ledger::{Address, InstanceId};
use crate::pre::Ciphertext;

pub const MAX_PURPOSE_LEN: usize = 64;
pub const MAX_DESCRIPTION_LEN: usize = 2048;

/// Everything a contract may observe about the transaction it executes.
pub struct ExecContext<'a> {
    pub sender: Address,
    pub nonce: u64,
    pub height: u64,
    pub instance: InstanceId,
    pub is_registered: &'a dyn Fn(&Address) -> bool,
}

/// Executes one call against the instance map. On error nothing is mutated.
pub fn execute(
    instances: &mut BTreeMap<InstanceId, ContractInstance>,
    ctx: &ExecContext<'_>,
    method: &str,
    payload: &[u8],
) -> Result<(), ContractError> {
    let method: Method = method.parse()?;
    if method == Method::Instantiate {
        return instantiate(instances, ctx, Call::decode(method, payload)?);
    }

    let instance = instances
        .get_mut(&ctx.instance)
        .ok_or(ContractError::UnknownInstance)?;
    if method.kind() != Some(instance.kind()) {
        return Err(ContractError::WrongKind);
    }
    let authorized = match method.caller() {
        Caller::Sender => ctx.sender == instance.sender,
        Caller::Recipient => ctx.sender == instance.recipient,
        Caller::Anyone => true,
    };
    if !authorized {
        return Err(ContractError::UnauthorizedSender);
    }
    let call = Call::decode(method, payload)?;
    apply(instance, ctx, call)
}

fn instantiate(
    instances: &mut BTreeMap<InstanceId, ContractInstance>,
    ctx: &ExecContext<'_>,
    call: Call,
) -> Result<(), ContractError> {
    let Call::Instantiate {
        kind,
        recipient,
        mint,
    } = call
    else {
        unreachable!("decoded from Method::Instantiate")
    };
    if ctx.instance != InstanceId::derive(&ctx.sender, ctx.nonce) {
        return Err(ContractError::MalformedPayload);
    }
    if instances.contains_key(&ctx.instance) {
        return Err(ContractError::InstanceExists);
    }
    if !(ctx.is_registered)(&recipient) {
        return Err(ContractError::UnknownAddress);
    }
    if mint != 0 && kind != ContractKind::Reward {
        return Err(ContractError::MalformedPayload);
    }
    let mut state = ContractState::empty(kind);
    if let ContractState::Reward(reward) = &mut state {
        if mint > 0 {
            reward.balances.insert(ctx.sender, mint);
        }
        reward.minted = mint;
    }
    instances.insert(
        ctx.instance,
        ContractInstance {
            id: ctx.instance,
            sender: ctx.sender,
            recipient,
            created_at: ctx.height,
            state,
        },
    );
    Ok(())
}

fn valid_ciphertext(ct: &Ciphertext) -> bool {
    ct.capsule.verify()
}

fn apply(
    instance: &mut ContractInstance,
    ctx: &ExecContext<'_>,
    call: Call,
) -> Result<(), ContractError> {
    match (&mut instance.state, call) {
        (
            ContractState::Prescription(s),
            Call::CreatePrescription {
                c_pi,
                c_med,
                c_dia,
            },
        ) => {
            if s.record.is_some() {
                return Err(ContractError::AlreadyCreated);
            }
            if ![&c_pi, &c_med, &c_dia].into_iter().all(valid_ciphertext) {
                return Err(ContractError::MalformedPayload);
            }
            s.record = Some(PrescriptionRecord {
                c_pi,
                c_med,
                c_dia,
                created_at: ctx.height,
            });
            s.last_access.push(AccessEvent {
                accessor: ctx.sender,
                item: None,
                purpose: "create".to_string(),
                height: ctx.height,
            });
        }
        (ContractState::Prescription(s), Call::RecordAccess { item, purpose }) => {
            if s.record.is_none() {
                return Err(ContractError::NotCreated);
            }
            if purpose.len() > MAX_PURPOSE_LEN {
                return Err(ContractError::PurposeTooLong);
            }
            s.last_access.push(AccessEvent {
                accessor: ctx.sender,
                item: Some(item),
                purpose,
                height: ctx.height,
            });
        }
        (
            ContractState::Consent(s),
            Call::RequestDelegation {
                requester_pk,
                items,
            },
        ) => {
            if items.is_empty() {
                return Err(ContractError::EmptyItems);
            }
            // The key that will receive delegations must belong to the sender.
            if Address::from_public_key(&requester_pk) != ctx.sender {
                return Err(ContractError::MalformedPayload);
            }
            s.requests.push(ConsentRequest {
                id: RequestId::derive(&ctx.sender, ctx.nonce),
                requester: ctx.sender,
                requester_pk,
                items,
                granted: ItemSet::EMPTY,
                status: RequestStatus::Pending,
                requested_at: ctx.height,
                decided_at: None,
            });
        }
        (
            ContractState::Consent(s),
            Call::SetConsent {
                request_id,
                decision,
                grants,
            },
        ) => {
            let request = s
                .requests
                .iter_mut()
                .find(|r| r.id == request_id)
                .ok_or(ContractError::UnknownRequest)?;
            if request.status != RequestStatus::Pending {
                return Err(ContractError::AlreadyDecided);
            }
            let granted: ItemSet = grants.keys().copied().collect();
            let shape_ok = match decision {
                Decision::Granted => !granted.is_empty() && granted.is_subset(request.items),
                Decision::Denied => granted.is_empty(),
            };
            if !shape_ok {
                return Err(ContractError::GrantItemMismatch);
            }
            let blobs_ok = grants.values().all(|blob| {
                Ciphertext::from_bytes(blob).is_ok_and(|ct| valid_ciphertext(&ct))
            });
            if !blobs_ok {
                return Err(ContractError::MalformedPayload);
            }
            request.status = decision.into();
            request.granted = granted;
            request.decided_at = Some(ctx.height);
            for (item, blob) in grants {
                s.grants.insert((request_id, item), blob);
            }
        }
        (
            ContractState::Sales(s),
            Call::SellMedication {
                medication_name,
                dosage,
                price,
                prescription_ref,
            },
        ) => {
            s.sales.push(Sale {
                medication_name,
                dosage,
                price,
                prescription_ref,
                height: ctx.height,
            });
        }
        (ContractState::MedicationControl(s), Call::SupplyMedications { amount }) => {
            if amount == 0 {
                return Err(ContractError::ZeroAmount);
            }
            s.supplied = s.supplied.checked_add(amount).ok_or(ContractError::Overflow)?;
        }
        (ContractState::MedicationControl(s), Call::UpdateMedicationsSold { amount }) => {
            if amount == 0 {
                return Err(ContractError::ZeroAmount);
            }
            match s.sold.checked_add(amount) {
                Some(total) if total <= s.supplied => s.sold = total,
                _ => return Err(ContractError::ExceedsSupply),
            }
        }
        (ContractState::Report(s), Call::CreateReport { description }) => {
            if description.len() > MAX_DESCRIPTION_LEN {
                return Err(ContractError::DescriptionTooLong);
            }
            s.reports.push(Report {
                source: ctx.sender,
                description,
                height: ctx.height,
            });
        }
        (ContractState::Reward(s), Call::SendReward { to, amount }) => {
            if amount == 0 {
                return Err(ContractError::ZeroAmount);
            }
            if !(ctx.is_registered)(&to) {
                return Err(ContractError::UnknownAddress);
            }
            let from_balance = s.balance(&ctx.sender);
            if from_balance < amount {
                return Err(ContractError::InsufficientBalance);
            }
            s.balances.insert(ctx.sender, from_balance - amount);
            *s.balances.entry(to).or_insert(0) += amount;
            s.balances.retain(|_, v| *v > 0);
            s.transfers.push(Transfer {
                to,
                amount,
                height: ctx.height,
            });
        }
        _ => unreachable!("method kind checked before dispatch"),
    }
    Ok(())
}
