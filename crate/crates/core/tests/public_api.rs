use std::collections::BTreeSet;

use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use rxledger_core::codec::Canonical;
use rxledger_core::contracts::{ContractKind, Decision, Item};
use rxledger_core::ledger::{
    export_chain, import_chain, verify_chain, verify_chain_text, ChainConfig, ChainVerdict, GenesisFile, Ledger,
};
use rxledger_core::pre::{self, Ciphertext, DelegationKey, ReEncryption};
use rxledger_core::provenance;
use rxledger_core::scenario::{self, Scenario, DEMO_FULL_FLOW};
use rxledger_core::stakeholder::{self, derive_seed, Role, StakeholderContext, WorkflowError};

fn actor(role: Role, n: u8, ledger: &stakeholder::LedgerHandle) -> StakeholderContext {
    StakeholderContext::from_seed(role, derive_seed(&[b"public-api", &[n]]), ledger.clone()).unwrap()
}

#[test]
fn prescription_lifecycle_through_contexts() {
    let ledger = stakeholder::shared(Ledger::new(ChainConfig::default(), vec![]).unwrap());
    let mut doctor = actor(Role::Doctor, 1, &ledger);
    let mut patient = actor(Role::Patient, 2, &ledger);
    let mut pharmacy = actor(Role::Pharmacy, 3, &ledger);
    let mut regulator = actor(Role::Regulator, 4, &ledger);

    let consent = patient.patient_open_consent().unwrap();
    let med = b"ibuprofen;200mg;4\n".to_vec();
    let rx = doctor
        .doctor_create_prescription(&patient.public_key(), b"Bob;1971", &med, b"sprain")
        .unwrap();

    let req = pharmacy.consumer_request_access(consent, "PI,MED,DIA".parse().unwrap()).unwrap();
    let decisions = patient.patient_handle_requests(consent, &BTreeSet::from([req])).unwrap();
    assert_eq!(decisions.len(), 1);
    assert_eq!(decisions[0].decision, Decision::Granted);
    assert_eq!(decisions[0].granted.to_string(), "MED");

    assert_eq!(pharmacy.consumer_complete_access(consent, rx, req, Item::Med, "dispense").unwrap(), med);
    for item in [Item::Pi, Item::Dia] {
        let err = pharmacy.consumer_complete_access(consent, rx, req, item, "read").unwrap_err();
        assert_eq!(err.name(), "NoGrant");
    }

    let control = regulator.open(ContractKind::MedicationControl, pharmacy.address(), 0).unwrap();
    let sales = pharmacy.open(ContractKind::Sales, regulator.address(), 0).unwrap();
    regulator.regulator_supply(control, 3).unwrap();
    pharmacy.pharmacy_dispense(sales, control, rx, &med).unwrap();
    let again: WorkflowError = pharmacy.pharmacy_dispense(sales, control, rx, &med).unwrap_err();
    assert_eq!(again.name(), "AlreadyDispensed");
    let report = regulator.regulator_verify_compliance(control, sales).unwrap();
    assert_eq!((report.supplied, report.sold, report.sales_count, report.consistent), (3, 1, 1, true));

    let guard = ledger.lock().unwrap();
    let chain = guard.chain().to_vec();
    drop(guard);
    assert_eq!(verify_chain(&chain), ChainVerdict::Valid);
    let lineage = provenance::lineage(&chain, rx).unwrap();
    assert_eq!(lineage.prescription_id, rx);
    assert_eq!(lineage.patient, patient.address());
    assert!(lineage.accesses.iter().any(|a| a.item == Some(Item::Med)));
    assert!(!lineage.accesses.iter().any(|a| a.item == Some(Item::Pi) || a.item == Some(Item::Dia)));
}

#[test]
fn exported_demo_chain_round_trips() {
    let outcome = Scenario::parse(DEMO_FULL_FLOW).unwrap().run().unwrap();
    let chain = outcome.chain();
    let text = export_chain(&chain);
    assert_eq!(text.lines().count(), chain.len());
    let back = import_chain(&text).unwrap();
    assert_eq!(back, chain);
    assert_eq!(export_chain(&back), text);
    assert!(verify_chain_text(&text).is_valid());
    assert!(!verify_chain_text(&text.replacen('0', "O", 1)).is_valid());
}

#[test]
fn genesis_toml_builds_an_equivalent_ledger() {
    let genesis = GenesisFile {
        config: ChainConfig::ethereum(),
        accounts: vec![],
    };
    let parsed = GenesisFile::parse(&genesis.to_toml()).unwrap();
    let a = parsed.build().unwrap();
    let b = Ledger::new(ChainConfig::ethereum(), vec![]).unwrap();
    assert_eq!(a.chain(), b.chain());
}

#[test]
fn bundled_scenarios_are_listed_by_name() {
    assert!(scenario::bundled("demo_full_flow").is_some());
    assert!(scenario::bundled("pharmacy_requests_pi").is_some());
    assert!(scenario::bundled("nope").is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pre_round_trip_through_canonical_bytes(
        seed in any::<u64>(),
        plaintext in proptest::collection::vec(any::<u8>(), 0..2048),
        ad in proptest::collection::vec(any::<u8>(), 0..32),
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = pre::keygen(&mut rng).unwrap();
        let b = pre::keygen(&mut rng).unwrap();

        let ct = Ciphertext::from_bytes(&pre::encrypt(&a.public, &plaintext, &ad, &mut rng).unwrap().to_bytes()).unwrap();
        prop_assert_eq!(pre::decrypt_original(&a.secret, &ct).unwrap(), plaintext.clone());

        let dk = DelegationKey::from_bytes(
            &pre::generate_delegation_key(&a.secret, &b.public, &mut rng).unwrap().to_bytes(),
        ).unwrap();
        let re = ReEncryption::from_bytes(&pre::reencrypt(&dk, &ct.capsule, &mut rng).unwrap().to_bytes()).unwrap();
        prop_assert_eq!(pre::decrypt_reencrypted(&b.secret, &a.public, &re, &ct).unwrap(), plaintext);
        prop_assert!(pre::decrypt_original(&b.secret, &ct).is_err());
    }

    #[test]
    fn scenario_seed_fixes_the_state_root(seed in any::<u64>()) {
        let mut s = Scenario::parse(DEMO_FULL_FLOW).unwrap();
        s.seed = seed;
        let first = s.run().unwrap().state_root();
        prop_assert_eq!(s.run().unwrap().state_root(), first);
    }
}
