use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use super::*;
use crate::ledger::InstanceId;
use crate::pre::{encrypt, Ciphertext, KeyPair, PublicKey};
use crate::testutil::{keys, rng};

const DOCTOR: usize = 0;
const PATIENT: usize = 1;
const PHARMACY: usize = 2;
const REGULATOR: usize = 3;
const OUTSIDER: usize = 4;

struct Env {
    parties: Vec<KeyPair>,
    registered: BTreeSet<Address>,
    instances: BTreeMap<InstanceId, ContractInstance>,
    nonces: Vec<u64>,
    height: u64,
}

impl Env {
    fn new() -> Self {
        let parties: Vec<_> = (0..5).map(|i| keys(100 + i)).collect();
        let registered = parties[..4]
            .iter()
            .map(|k| Address::from_public_key(&k.public))
            .collect();
        Self {
            parties,
            registered,
            instances: BTreeMap::new(),
            nonces: vec![0; 5],
            height: 1,
        }
    }

    fn addr(&self, who: usize) -> Address {
        Address::from_public_key(&self.parties[who].public)
    }

    fn pk(&self, who: usize) -> PublicKey {
        self.parties[who].public
    }

    fn raw(
        &mut self,
        who: usize,
        instance: InstanceId,
        method: &str,
        payload: &[u8],
    ) -> Result<(), ContractError> {
        let nonce = self.nonces[who];
        self.nonces[who] += 1;
        self.height += 1;
        let registered = self.registered.clone();
        let is_registered = move |a: &Address| registered.contains(a);
        let ctx = ExecContext {
            sender: self.addr(who),
            nonce,
            height: self.height,
            instance,
            is_registered: &is_registered,
        };
        execute(&mut self.instances, &ctx, method, payload)
    }

    fn call(&mut self, who: usize, instance: InstanceId, call: &Call) -> Result<(), ContractError> {
        self.raw(who, instance, call.method().as_str(), &call.encode_payload())
    }

    fn open(&mut self, who: usize, kind: ContractKind, recipient: usize, mint: u64) -> InstanceId {
        let id = InstanceId::derive(&self.addr(who), self.nonces[who]);
        let call = Call::Instantiate {
            kind,
            recipient: self.addr(recipient),
            mint,
        };
        self.call(who, id, &call).expect("instantiate");
        id
    }

    fn state(&self, id: InstanceId) -> &ContractState {
        &self.instances[&id].state
    }

    fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for inst in self.instances.values() {
            out.extend(inst.to_bytes());
        }
        out
    }

    fn ciphertext(&self, item: Item, seed: u64) -> Ciphertext {
        encrypt(&self.pk(PATIENT), b"payload", item.as_str().as_bytes(), &mut rng(seed))
            .expect("encrypt")
    }

    fn prescription_call(&self) -> Call {
        Call::CreatePrescription {
            c_pi: self.ciphertext(Item::Pi, 1),
            c_med: self.ciphertext(Item::Med, 2),
            c_dia: self.ciphertext(Item::Dia, 3),
        }
    }
}

fn items(list: &[Item]) -> ItemSet {
    list.iter().copied().collect()
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>(), Ok(m));
    }
    assert_eq!("drop_table".parse::<Method>(), Err(ContractError::UnknownMethod));
}

#[test]
fn error_codes_round_trip() {
    for e in ContractError::ALL {
        assert_eq!(ContractError::from_code(e.code()), Some(e));
    }
    assert_eq!(ContractError::from_code(0), None);
}

#[test]
fn item_set_display_and_parse() {
    let s = items(&[Item::Dia, Item::Pi]);
    assert_eq!(s.to_string(), "PI,DIA");
    assert_eq!("PI,DIA".parse::<ItemSet>().unwrap(), s);
    assert_eq!(ItemSet::EMPTY.to_string(), "-");
    assert!("PI,XX".parse::<ItemSet>().is_err());
}

#[test]
fn instantiate_binds_parties() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let inst = &env.instances[&rx];
    assert_eq!(inst.sender, env.addr(DOCTOR));
    assert_eq!(inst.recipient, env.addr(PATIENT));
    assert_eq!(inst.state.as_prescription().unwrap(), &PrescriptionState::default());

    let control = env.open(REGULATOR, ContractKind::MedicationControl, PHARMACY, 0);
    assert_eq!(env.instances[&control].kind(), ContractKind::MedicationControl);
}

#[test]
fn instantiate_rejects_unregistered_recipient() {
    let mut env = Env::new();
    let id = InstanceId::derive(&env.addr(DOCTOR), 0);
    let call = Call::Instantiate {
        kind: ContractKind::Prescription,
        recipient: env.addr(OUTSIDER),
        mint: 0,
    };
    assert_eq!(env.call(DOCTOR, id, &call), Err(ContractError::UnknownAddress));
    assert!(env.instances.is_empty());
}

#[test]
fn instantiate_rejects_mint_outside_reward() {
    let mut env = Env::new();
    let id = InstanceId::derive(&env.addr(DOCTOR), 0);
    let call = Call::Instantiate {
        kind: ContractKind::Sales,
        recipient: env.addr(REGULATOR),
        mint: 5,
    };
    assert_eq!(env.call(DOCTOR, id, &call), Err(ContractError::MalformedPayload));
}

#[test]
fn instantiate_rejects_foreign_id() {
    let mut env = Env::new();
    let call = Call::Instantiate {
        kind: ContractKind::Sales,
        recipient: env.addr(REGULATOR),
        mint: 0,
    };
    assert_eq!(
        env.call(PHARMACY, InstanceId(7), &call),
        Err(ContractError::MalformedPayload)
    );
}

#[test]
fn create_prescription_by_doctor() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let call = env.prescription_call();
    env.call(DOCTOR, rx, &call).unwrap();
    let s = env.state(rx).as_prescription().unwrap();
    let record = s.record.as_ref().unwrap();
    assert_eq!(record.c_med, env.ciphertext(Item::Med, 2));
    assert_eq!(s.last_access.len(), 1);
    assert_eq!(s.last_access[0].accessor, env.addr(DOCTOR));
    assert_eq!(s.last_access[0].item, None);
}

#[test]
fn create_prescription_by_pharmacy_is_unauthorized() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let call = env.prescription_call();
    let before = env.snapshot();
    assert_eq!(env.call(PHARMACY, rx, &call), Err(ContractError::UnauthorizedSender));
    assert_eq!(env.snapshot(), before);
}

#[test]
fn create_prescription_twice() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let call = env.prescription_call();
    env.call(DOCTOR, rx, &call).unwrap();
    assert_eq!(env.call(DOCTOR, rx, &call), Err(ContractError::AlreadyCreated));
}

#[test]
fn create_prescription_rejects_bad_capsule() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let Call::CreatePrescription { c_pi, c_med, mut c_dia } = env.prescription_call() else {
        unreachable!()
    };
    c_dia.capsule = c_pi.capsule;
    c_dia.capsule.s = c_med.capsule.s;
    let call = Call::CreatePrescription { c_pi, c_med, c_dia };
    assert_eq!(env.call(DOCTOR, rx, &call), Err(ContractError::MalformedPayload));
}

#[test]
fn record_access_appends_in_order() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let call = env.prescription_call();
    env.call(DOCTOR, rx, &call).unwrap();
    let dispense = Call::RecordAccess {
        item: Item::Med,
        purpose: "dispense".into(),
    };
    env.call(PHARMACY, rx, &dispense).unwrap();
    let audit = Call::RecordAccess {
        item: Item::Med,
        purpose: "audit".into(),
    };
    env.call(REGULATOR, rx, &audit).unwrap();
    env.call(PHARMACY, rx, &dispense).unwrap();
    let log = &env.state(rx).as_prescription().unwrap().last_access;
    let got: Vec<_> = log[1..]
        .iter()
        .map(|e| (e.accessor, e.item, e.purpose.as_str()))
        .collect();
    assert_eq!(
        got,
        vec![
            (env.addr(PHARMACY), Some(Item::Med), "dispense"),
            (env.addr(REGULATOR), Some(Item::Med), "audit"),
            (env.addr(PHARMACY), Some(Item::Med), "dispense"),
        ]
    );
    assert!(log.windows(2).all(|w| w[0].height < w[1].height));
}

#[test]
fn record_access_before_creation() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let call = Call::RecordAccess {
        item: Item::Dia,
        purpose: "read".into(),
    };
    assert_eq!(env.call(PHARMACY, rx, &call), Err(ContractError::NotCreated));
}

#[test]
fn record_access_unknown_item_and_long_purpose() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let call = env.prescription_call();
    env.call(DOCTOR, rx, &call).unwrap();
    let mut payload = Encoder::new();
    payload.u8(9).str("read");
    assert_eq!(
        env.raw(PHARMACY, rx, "record_access", payload.as_slice()),
        Err(ContractError::UnknownItem)
    );
    let long = Call::RecordAccess {
        item: Item::Pi,
        purpose: "x".repeat(MAX_PURPOSE_LEN + 1),
    };
    assert_eq!(env.call(PHARMACY, rx, &long), Err(ContractError::PurposeTooLong));
}

#[test]
fn method_on_wrong_kind() {
    let mut env = Env::new();
    let sales = env.open(PHARMACY, ContractKind::Sales, REGULATOR, 0);
    let call = Call::SupplyMedications { amount: 3 };
    assert_eq!(env.call(PHARMACY, sales, &call), Err(ContractError::WrongKind));
    assert_eq!(
        env.call(PHARMACY, InstanceId(42), &call),
        Err(ContractError::UnknownInstance)
    );
}

fn consent_env() -> (Env, InstanceId) {
    let mut env = Env::new();
    let consent = env.open(PATIENT, ContractKind::Consent, PATIENT, 0);
    (env, consent)
}

fn request(env: &mut Env, consent: InstanceId, who: usize, set: ItemSet) -> RequestId {
    let id = RequestId::derive(&env.addr(who), env.nonces[who]);
    let call = Call::RequestDelegation {
        requester_pk: env.pk(who),
        items: set,
    };
    env.call(who, consent, &call).unwrap();
    id
}

fn blob(env: &Env, seed: u64) -> Vec<u8> {
    encrypt(&env.pk(PHARMACY), b"key", b"ad", &mut rng(seed)).unwrap().to_bytes()
}

#[test]
fn request_delegation_records_pending() {
    let (mut env, consent) = consent_env();
    let rid = request(&mut env, consent, PHARMACY, items(&[Item::Med]));
    let rid2 = request(&mut env, consent, DOCTOR, ItemSet::ALL);
    let s = env.state(consent).as_consent().unwrap();
    let r = s.request(rid).unwrap();
    assert_eq!(r.status, RequestStatus::Pending);
    assert_eq!(r.requester, env.addr(PHARMACY));
    assert_eq!(r.items, items(&[Item::Med]));
    assert_eq!(s.request(rid2).unwrap().items, ItemSet::ALL);
}

#[test]
fn request_delegation_validation() {
    let (mut env, consent) = consent_env();
    let empty = Call::RequestDelegation {
        requester_pk: env.pk(PHARMACY),
        items: ItemSet::EMPTY,
    };
    assert_eq!(env.call(PHARMACY, consent, &empty), Err(ContractError::EmptyItems));
    let foreign_key = Call::RequestDelegation {
        requester_pk: env.pk(DOCTOR),
        items: ItemSet::ALL,
    };
    assert_eq!(
        env.call(PHARMACY, consent, &foreign_key),
        Err(ContractError::MalformedPayload)
    );
}

#[test]
fn set_consent_grant_and_decide_once() {
    let (mut env, consent) = consent_env();
    let rid = request(&mut env, consent, PHARMACY, items(&[Item::Med]));
    let key_blob = blob(&env, 5);
    let grant = Call::SetConsent {
        request_id: rid,
        decision: Decision::Granted,
        grants: BTreeMap::from([(Item::Med, key_blob.clone())]),
    };
    env.call(PATIENT, consent, &grant).unwrap();
    let s = env.state(consent).as_consent().unwrap();
    assert_eq!(s.request(rid).unwrap().status, RequestStatus::Granted);
    assert_eq!(s.grant(rid, Item::Med), Some(key_blob.as_slice()));
    assert_eq!(env.call(PATIENT, consent, &grant), Err(ContractError::AlreadyDecided));
}

#[test]
fn set_consent_by_non_patient() {
    let (mut env, consent) = consent_env();
    let rid = request(&mut env, consent, PHARMACY, items(&[Item::Med]));
    let grant = Call::SetConsent {
        request_id: rid,
        decision: Decision::Granted,
        grants: BTreeMap::from([(Item::Med, blob(&env, 5))]),
    };
    let before = env.snapshot();
    assert_eq!(env.call(PHARMACY, consent, &grant), Err(ContractError::UnauthorizedSender));
    assert_eq!(env.snapshot(), before);
}

#[test]
fn set_consent_shape_checks() {
    let (mut env, consent) = consent_env();
    let rid = request(&mut env, consent, PHARMACY, items(&[Item::Med]));
    let outside = Call::SetConsent {
        request_id: rid,
        decision: Decision::Granted,
        grants: BTreeMap::from([(Item::Pi, blob(&env, 5))]),
    };
    assert_eq!(env.call(PATIENT, consent, &outside), Err(ContractError::GrantItemMismatch));
    let empty_grant = Call::SetConsent {
        request_id: rid,
        decision: Decision::Granted,
        grants: BTreeMap::new(),
    };
    assert_eq!(env.call(PATIENT, consent, &empty_grant), Err(ContractError::GrantItemMismatch));
    let deny_with_keys = Call::SetConsent {
        request_id: rid,
        decision: Decision::Denied,
        grants: BTreeMap::from([(Item::Med, blob(&env, 5))]),
    };
    assert_eq!(env.call(PATIENT, consent, &deny_with_keys), Err(ContractError::GrantItemMismatch));
    let junk = Call::SetConsent {
        request_id: rid,
        decision: Decision::Granted,
        grants: BTreeMap::from([(Item::Med, vec![1, 2, 3])]),
    };
    assert_eq!(env.call(PATIENT, consent, &junk), Err(ContractError::MalformedPayload));
    let unknown = Call::SetConsent {
        request_id: RequestId(1),
        decision: Decision::Denied,
        grants: BTreeMap::new(),
    };
    assert_eq!(env.call(PATIENT, consent, &unknown), Err(ContractError::UnknownRequest));

    let deny = Call::SetConsent {
        request_id: rid,
        decision: Decision::Denied,
        grants: BTreeMap::new(),
    };
    env.call(PATIENT, consent, &deny).unwrap();
    let s = env.state(consent).as_consent().unwrap();
    assert_eq!(s.request(rid).unwrap().status, RequestStatus::Denied);
    assert!(s.grants.is_empty());
}

#[test]
fn sales_append_and_authorize() {
    let mut env = Env::new();
    let sales = env.open(PHARMACY, ContractKind::Sales, REGULATOR, 0);
    let sell = |rx| Call::SellMedication {
        medication_name: "amoxicillin".into(),
        dosage: "500mg".into(),
        price: 12,
        prescription_ref: InstanceId(rx),
    };
    env.call(PHARMACY, sales, &sell(1)).unwrap();
    env.call(PHARMACY, sales, &sell(2)).unwrap();
    assert_eq!(env.call(PATIENT, sales, &sell(3)), Err(ContractError::UnauthorizedSender));
    let s = env.state(sales).as_sales().unwrap();
    assert_eq!(s.sales.len(), 2);
    assert_eq!(s.sales[0].prescription_ref, InstanceId(1));
    assert_eq!(s.sales[1].prescription_ref, InstanceId(2));
    assert_eq!(s.sales[0].medication_name, "amoxicillin");
}

#[test]
fn medication_control_arithmetic() {
    let mut env = Env::new();
    let control = env.open(REGULATOR, ContractKind::MedicationControl, PHARMACY, 0);
    let supply = |amount| Call::SupplyMedications { amount };
    let sold = |amount| Call::UpdateMedicationsSold { amount };
    env.call(REGULATOR, control, &supply(100)).unwrap();
    assert_eq!(env.state(control).as_medication_control().unwrap().available(), 100);
    assert_eq!(env.call(PHARMACY, control, &supply(5)), Err(ContractError::UnauthorizedSender));
    assert_eq!(env.call(REGULATOR, control, &supply(0)), Err(ContractError::ZeroAmount));
    env.call(PHARMACY, control, &sold(30)).unwrap();
    let s = *env.state(control).as_medication_control().unwrap();
    assert_eq!((s.supplied, s.sold, s.available()), (100, 30, 70));
    env.call(PHARMACY, control, &sold(60)).unwrap();
    assert_eq!(env.call(PHARMACY, control, &sold(20)), Err(ContractError::ExceedsSupply));
    assert_eq!(env.state(control).as_medication_control().unwrap().sold, 90);
    assert_eq!(env.call(REGULATOR, control, &sold(1)), Err(ContractError::UnauthorizedSender));
    assert_eq!(env.call(PHARMACY, control, &sold(0)), Err(ContractError::ZeroAmount));
}

#[test]
fn reports() {
    let mut env = Env::new();
    let report = env.open(PATIENT, ContractKind::Report, REGULATOR, 0);
    let text = "sold antibiotics without prescription at block 42";
    env.call(
        PATIENT,
        report,
        &Call::CreateReport {
            description: text.into(),
        },
    )
    .unwrap();
    let too_long = Call::CreateReport {
        description: "x".repeat(3000),
    };
    assert_eq!(env.call(PATIENT, report, &too_long), Err(ContractError::DescriptionTooLong));
    let forged = Call::CreateReport {
        description: "fake".into(),
    };
    assert_eq!(env.call(PHARMACY, report, &forged), Err(ContractError::UnauthorizedSender));
    let s = env.state(report).as_report().unwrap();
    assert_eq!(s.reports.len(), 1);
    assert_eq!(s.reports[0].description, text);
    assert_eq!(s.reports[0].source, env.addr(PATIENT));
}

#[test]
fn rewards() {
    let mut env = Env::new();
    let reward = env.open(REGULATOR, ContractKind::Reward, PATIENT, 1000);
    let to = env.addr(PATIENT);
    env.call(REGULATOR, reward, &Call::SendReward { to, amount: 50 }).unwrap();
    let s = env.state(reward).as_reward().unwrap();
    assert_eq!(s.balance(&env.addr(REGULATOR)), 950);
    assert_eq!(s.balance(&to), 50);
    assert_eq!(s.total(), 1000);
    assert_eq!(
        env.call(REGULATOR, reward, &Call::SendReward { to, amount: 2000 }),
        Err(ContractError::InsufficientBalance)
    );
    assert_eq!(
        env.call(PATIENT, reward, &Call::SendReward { to, amount: 1 }),
        Err(ContractError::UnauthorizedSender)
    );
    let outsider = env.addr(OUTSIDER);
    assert_eq!(
        env.call(REGULATOR, reward, &Call::SendReward { to: outsider, amount: 1 }),
        Err(ContractError::UnknownAddress)
    );
}

#[test]
fn malformed_payloads() {
    let mut env = Env::new();
    let control = env.open(REGULATOR, ContractKind::MedicationControl, PHARMACY, 0);
    assert_eq!(
        env.raw(REGULATOR, control, "supply_medications", &[0, 1]),
        Err(ContractError::MalformedPayload)
    );
    assert_eq!(
        env.raw(REGULATOR, control, "supply_medications", &[0; 9]),
        Err(ContractError::MalformedPayload)
    );
    assert_eq!(
        env.raw(REGULATOR, control, "mint_tokens", &[]),
        Err(ContractError::UnknownMethod)
    );
}

#[test]
fn instance_state_round_trips() {
    let (mut env, consent) = consent_env();
    let rid = request(&mut env, consent, PHARMACY, items(&[Item::Med]));
    let grant = Call::SetConsent {
        request_id: rid,
        decision: Decision::Granted,
        grants: BTreeMap::from([(Item::Med, blob(&env, 5))]),
    };
    env.call(PATIENT, consent, &grant).unwrap();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let call = env.prescription_call();
    env.call(DOCTOR, rx, &call).unwrap();
    let reward = env.open(REGULATOR, ContractKind::Reward, PATIENT, 10);
    for inst in env.instances.values() {
        assert_eq!(&ContractInstance::from_bytes(&inst.to_bytes()).unwrap(), inst);
    }
    assert!(env.instances.contains_key(&reward));
}

/// Every method, called by each party that is not its designated caller,
/// must fail with `UnauthorizedSender` and leave state unchanged.
#[test]
fn sender_binding_all_methods() {
    let mut env = Env::new();
    let rx = env.open(DOCTOR, ContractKind::Prescription, PATIENT, 0);
    let consent = env.open(PATIENT, ContractKind::Consent, PATIENT, 0);
    let sales = env.open(PHARMACY, ContractKind::Sales, REGULATOR, 0);
    let control = env.open(REGULATOR, ContractKind::MedicationControl, PHARMACY, 0);
    let report = env.open(PATIENT, ContractKind::Report, REGULATOR, 0);
    let reward = env.open(REGULATOR, ContractKind::Reward, PATIENT, 100);
    let rid = request(&mut env, consent, PHARMACY, items(&[Item::Med]));
    let patient = env.addr(PATIENT);
    let cases: Vec<(InstanceId, Call, usize)> = vec![
        (rx, env.prescription_call(), DOCTOR),
        (
            consent,
            Call::SetConsent {
                request_id: rid,
                decision: Decision::Denied,
                grants: BTreeMap::new(),
            },
            PATIENT,
        ),
        (
            sales,
            Call::SellMedication {
                medication_name: "m".into(),
                dosage: "d".into(),
                price: 1,
                prescription_ref: rx,
            },
            PHARMACY,
        ),
        (control, Call::SupplyMedications { amount: 1 }, REGULATOR),
        (control, Call::UpdateMedicationsSold { amount: 1 }, PHARMACY),
        (report, Call::CreateReport { description: "r".into() }, PATIENT),
        (reward, Call::SendReward { to: patient, amount: 1 }, REGULATOR),
    ];
    for (instance, call, owner) in cases {
        for who in [DOCTOR, PATIENT, PHARMACY, REGULATOR, OUTSIDER] {
            if who == owner {
                continue;
            }
            let before = env.snapshot();
            assert_eq!(
                env.call(who, instance, &call),
                Err(ContractError::UnauthorizedSender),
                "{:?} by party {who}",
                call.method()
            );
            assert_eq!(env.snapshot(), before);
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Supply(u64),
    Sold(u64),
    Reward(bool, u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u64..50).prop_map(Op::Supply),
        (0u64..50).prop_map(Op::Sold),
        (any::<bool>(), 0u64..400).prop_map(|(to_patient, a)| Op::Reward(to_patient, a)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_holds(ops in proptest::collection::vec(op(), 1..60)) {
        let mut env = Env::new();
        let control = env.open(REGULATOR, ContractKind::MedicationControl, PHARMACY, 0);
        let reward = env.open(REGULATOR, ContractKind::Reward, PATIENT, 1000);
        let (mut supplied, mut sold) = (0u64, 0u64);
        for op in ops {
            match op {
                Op::Supply(a) => {
                    let r = env.call(REGULATOR, control, &Call::SupplyMedications { amount: a });
                    prop_assert_eq!(r.is_ok(), a > 0);
                    supplied += if r.is_ok() { a } else { 0 };
                }
                Op::Sold(a) => {
                    let r = env.call(PHARMACY, control, &Call::UpdateMedicationsSold { amount: a });
                    let expect_ok = a > 0 && sold + a <= supplied;
                    prop_assert_eq!(r.is_ok(), expect_ok);
                    if a > 0 && !expect_ok {
                        prop_assert_eq!(r, Err(ContractError::ExceedsSupply));
                    }
                    sold += if expect_ok { a } else { 0 };
                }
                Op::Reward(to_patient, a) => {
                    let to = env.addr(if to_patient { PATIENT } else { PHARMACY });
                    let _ = env.call(REGULATOR, reward, &Call::SendReward { to, amount: a });
                }
            }
            let s = *env.state(control).as_medication_control().unwrap();
            prop_assert!(s.sold <= s.supplied);
            prop_assert_eq!((s.supplied, s.sold), (supplied, sold));
            prop_assert_eq!(env.state(reward).as_reward().unwrap().total(), 1000);
        }
    }

    #[test]
    fn payload_encoding_round_trips(amount in any::<u64>(), desc in ".{0,40}", bits in 1u8..8) {
        let set = ItemSet::from_bits(bits).unwrap();
        let pk = keys(7).public;
        let calls = vec![
            Call::SupplyMedications { amount },
            Call::CreateReport { description: desc.clone() },
            Call::RequestDelegation { requester_pk: pk, items: set },
            Call::SellMedication {
                medication_name: desc.clone(),
                dosage: desc,
                price: amount,
                prescription_ref: InstanceId(amount),
            },
        ];
        for call in calls {
            let bytes = call.encode_payload();
            prop_assert_eq!(Call::decode(call.method(), &bytes), Ok(call));
        }
    }
}
