//! Python bindings for rxledger.
//!
//! Keys, ciphertexts and delegation artifacts cross the boundary as their
//! canonical byte encodings. Instance and request ids are 16-digit hex
//! strings, matching the CLI.

use std::collections::BTreeSet;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use rxledger_core::bench;
use rxledger_core::codec::Canonical;
use rxledger_core::contracts::{ContractKind, Decision, Item, ItemSet, RequestId};
use rxledger_core::ledger::{
    export_chain, import_chain, verify_chain, verify_chain_text, Address, ChainConfig, ChainVerdict,
    InstanceId,
};
use rxledger_core::pre;
use rxledger_core::provenance;
use rxledger_core::scenario::{self, Scenario};
use rxledger_core::stakeholder::{self, derive_seed, LedgerHandle, Role, StakeholderContext};

create_exception!(rxledger, PreError, PyException, "Proxy re-encryption failure.");
create_exception!(rxledger, WorkflowError, PyException, "A stakeholder operation was refused.");
create_exception!(rxledger, ScenarioError, PyException, "A scenario failed to parse or an expectation did not hold.");

fn pre_err(e: pre::PreError) -> PyErr {
    PreError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Raised as `WorkflowError(name, message)`.
fn workflow_err(e: stakeholder::WorkflowError) -> PyErr {
    WorkflowError::new_err((e.name(), e.to_string()))
}

fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn decode<T: Canonical>(what: &str, bytes: &[u8]) -> PyResult<T> {
    T::from_bytes(bytes).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn secret(bytes: &[u8]) -> PyResult<pre::SecretKey> {
    pre::SecretKey::from_bytes(bytes).map_err(pre_err)
}

fn public(bytes: &[u8]) -> PyResult<pre::PublicKey> {
    pre::PublicKey::from_bytes(bytes).map_err(pre_err)
}

fn instance(s: &str) -> PyResult<InstanceId> {
    InstanceId::from_hex(s).ok_or_else(|| PyValueError::new_err(format!("{s:?} is not a 16-digit hex id")))
}

fn request(s: &str) -> PyResult<RequestId> {
    instance(s).map(|i| RequestId(i.0))
}

/// A secp256k1 key pair.
#[pyclass(module = "rxledger", frozen)]
struct KeyPair {
    inner: pre::KeyPair,
}

#[pymethods]
impl KeyPair {
    /// Fresh key pair; `seed` makes it reproducible.
    #[staticmethod]
    #[pyo3(signature = (seed=None))]
    fn generate(seed: Option<u64>) -> PyResult<Self> {
        let inner = pre::keygen(&mut rng(seed)).map_err(pre_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_secret(secret_key: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: pre::KeyPair::from_secret(secret(secret_key)?),
        })
    }

    /// 33-byte compressed public key.
    #[getter]
    fn public_key(&self) -> Vec<u8> {
        self.inner.public.to_bytes().to_vec()
    }

    /// 32-byte big-endian secret scalar.
    #[getter]
    fn secret_key(&self) -> Vec<u8> {
        self.inner.secret.to_bytes().to_vec()
    }

    #[getter]
    fn address(&self) -> String {
        Address::from_public_key(&self.inner.public).to_hex()
    }

    fn __repr__(&self) -> String {
        format!("KeyPair(address={})", self.address())
    }
}

/// Encrypts `plaintext` to `public_key`; returns the canonical ciphertext.
#[pyfunction]
#[pyo3(signature = (public_key, plaintext, associated_data=b"".as_slice(), seed=None))]
fn encrypt(
    py: Python<'_>,
    public_key: &[u8],
    plaintext: &[u8],
    associated_data: &[u8],
    seed: Option<u64>,
) -> PyResult<Vec<u8>> {
    let pk = public(public_key)?;
    let (pt, ad) = (plaintext.to_vec(), associated_data.to_vec());
    py.detach(move || pre::encrypt(&pk, &pt, &ad, &mut rng(seed)).map(|ct| ct.to_bytes()))
        .map_err(pre_err)
}

/// Decrypts a ciphertext with the key it was made for.
#[pyfunction]
fn decrypt(py: Python<'_>, secret_key: &[u8], ciphertext: &[u8]) -> PyResult<Vec<u8>> {
    let sk = secret(secret_key)?;
    let ct: pre::Ciphertext = decode("ciphertext", ciphertext)?;
    py.detach(move || pre::decrypt_original(&sk, &ct)).map_err(pre_err)
}

/// Delegation key letting `delegatee_public_key` open the delegator's data.
#[pyfunction]
#[pyo3(signature = (delegator_secret_key, delegatee_public_key, seed=None))]
fn delegate(delegator_secret_key: &[u8], delegatee_public_key: &[u8], seed: Option<u64>) -> PyResult<Vec<u8>> {
    let dk = pre::generate_delegation_key(&secret(delegator_secret_key)?, &public(delegatee_public_key)?, &mut rng(seed))
        .map_err(pre_err)?;
    Ok(dk.to_bytes())
}

/// Proxy step: transforms the ciphertext's capsule under a delegation key.
#[pyfunction]
#[pyo3(signature = (delegation_key, ciphertext, seed=None))]
fn reencrypt(delegation_key: &[u8], ciphertext: &[u8], seed: Option<u64>) -> PyResult<Vec<u8>> {
    let dk: pre::DelegationKey = decode("delegation key", delegation_key)?;
    let ct: pre::Ciphertext = decode("ciphertext", ciphertext)?;
    let re = pre::reencrypt(&dk, &ct.capsule, &mut rng(seed)).map_err(pre_err)?;
    Ok(re.to_bytes())
}

#[pyfunction]
fn decrypt_reencrypted(
    py: Python<'_>,
    delegatee_secret_key: &[u8],
    delegator_public_key: &[u8],
    reencryption: &[u8],
    ciphertext: &[u8],
) -> PyResult<Vec<u8>> {
    let sk = secret(delegatee_secret_key)?;
    let pk = public(delegator_public_key)?;
    let re: pre::ReEncryption = decode("re-encryption", reencryption)?;
    let ct: pre::Ciphertext = decode("ciphertext", ciphertext)?;
    py.detach(move || pre::decrypt_reencrypted(&sk, &pk, &re, &ct)).map_err(pre_err)
}

/// Simulated chain shared by any number of stakeholders.
#[pyclass(module = "rxledger", frozen)]
struct Ledger {
    handle: LedgerHandle,
}

impl Ledger {
    fn with<T>(&self, f: impl FnOnce(&rxledger_core::ledger::Ledger) -> T) -> T {
        let guard = self.handle.lock().unwrap_or_else(|p| p.into_inner());
        f(&guard)
    }
}

#[pymethods]
impl Ledger {
    #[new]
    #[pyo3(signature = (block_interval_ms=ChainConfig::default().block_interval_ms, skip_empty=false))]
    fn new(block_interval_ms: u64, skip_empty: bool) -> PyResult<Self> {
        let config = ChainConfig {
            block_interval_ms,
            skip_empty,
        };
        let ledger = rxledger_core::ledger::Ledger::new(config, vec![]).map_err(value_err)?;
        Ok(Self {
            handle: stakeholder::shared(ledger),
        })
    }

    #[getter]
    fn height(&self) -> u64 {
        self.with(|l| l.height())
    }

    /// Hex digest over all contract instances.
    #[getter]
    fn state_root(&self) -> String {
        self.with(|l| hex_digest(&l.state_root()))
    }

    /// Produces the next block at its scheduled time, committing the mempool.
    fn produce_block(&self) -> bool {
        self.handle.lock().unwrap_or_else(|p| p.into_inner()).produce_next_block().is_some()
    }

    /// One lowercase-hex block per line.
    fn export(&self) -> String {
        self.with(|l| export_chain(l.chain()))
    }

    fn verify(&self) -> String {
        self.with(|l| verify_chain(l.chain()).to_string())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A registered doctor, patient, pharmacy or regulator.
#[pyclass(module = "rxledger")]
struct Stakeholder {
    ctx: StakeholderContext,
}

fn parse_role(s: &str) -> PyResult<Role> {
    s.parse().map_err(PyValueError::new_err)
}

fn parse_kind(s: &str) -> PyResult<ContractKind> {
    ContractKind::ALL
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| PyValueError::new_err(format!("unknown contract kind {s:?}")))
}

fn parse_items(s: &str) -> PyResult<ItemSet> {
    s.parse().map_err(PyValueError::new_err)
}

fn parse_item(s: &str) -> PyResult<Item> {
    s.parse().map_err(PyValueError::new_err)
}

#[pymethods]
impl Stakeholder {
    /// Registers a new account on `ledger`. A `seed` fixes its keys and
    /// randomness.
    #[new]
    #[pyo3(signature = (ledger, role, seed=None))]
    fn new(ledger: &Ledger, role: &str, seed: Option<u64>) -> PyResult<Self> {
        let seed = match seed {
            Some(s) => derive_seed(&[b"python", &s.to_be_bytes()]),
            None => {
                let mut s = [0u8; 32];
                rand_core::OsRng.fill_bytes(&mut s);
                s
            }
        };
        let ctx = StakeholderContext::from_seed(parse_role(role)?, seed, ledger.handle.clone()).map_err(workflow_err)?;
        Ok(Self { ctx })
    }

    #[getter]
    fn role(&self) -> &'static str {
        self.ctx.role().as_str()
    }

    #[getter]
    fn address(&self) -> String {
        self.ctx.address().to_hex()
    }

    #[getter]
    fn public_key(&self) -> Vec<u8> {
        self.ctx.public_key().to_bytes().to_vec()
    }

    /// Opens a contract instance with this stakeholder as sender.
    #[pyo3(signature = (kind, recipient, mint=0))]
    fn open(&mut self, kind: &str, recipient: &str, mint: u64) -> PyResult<String> {
        let recipient = Address::from_hex(recipient).map_err(value_err)?;
        let id = self.ctx.open(parse_kind(kind)?, recipient, mint).map_err(workflow_err)?;
        Ok(id.to_string())
    }

    fn open_consent(&mut self) -> PyResult<String> {
        Ok(self.ctx.patient_open_consent().map_err(workflow_err)?.to_string())
    }

    fn create_prescription(&mut self, patient_public_key: &[u8], pi: &[u8], med: &[u8], dia: &[u8]) -> PyResult<String> {
        let pk = public(patient_public_key)?;
        let id = self.ctx.doctor_create_prescription(&pk, pi, med, dia).map_err(workflow_err)?;
        Ok(id.to_string())
    }

    /// `items` is a comma-separated subset of PI, MED, DIA.
    fn request_access(&mut self, consent: &str, items: &str) -> PyResult<String> {
        let id = self
            .ctx
            .consumer_request_access(instance(consent)?, parse_items(items)?)
            .map_err(workflow_err)?;
        Ok(id.to_string())
    }

    /// Decides the listed pending requests under the privacy policy. Returns
    /// `(request_id, granted_items)` pairs; denied requests map to `None`.
    fn handle_requests(&mut self, consent: &str, requests: Vec<String>) -> PyResult<Vec<(String, Option<String>)>> {
        let approve = requests.iter().map(|r| request(r)).collect::<PyResult<BTreeSet<_>>>()?;
        let decisions = self
            .ctx
            .patient_handle_requests(instance(consent)?, &approve)
            .map_err(workflow_err)?;
        Ok(decisions
            .into_iter()
            .map(|d| {
                let granted = (d.decision == Decision::Granted).then(|| d.granted.to_string());
                (d.request_id.to_string(), granted)
            })
            .collect())
    }

    #[pyo3(signature = (consent, prescription, request_id, item, purpose="read"))]
    fn complete_access(
        &mut self,
        consent: &str,
        prescription: &str,
        request_id: &str,
        item: &str,
        purpose: &str,
    ) -> PyResult<Vec<u8>> {
        self.ctx
            .consumer_complete_access(instance(consent)?, instance(prescription)?, request(request_id)?, parse_item(item)?, purpose)
            .map_err(workflow_err)
    }

    fn supply(&mut self, control: &str, amount: u64) -> PyResult<()> {
        self.ctx.regulator_supply(instance(control)?, amount).map_err(workflow_err)
    }

    /// Records the sale for a prescription; returns `(name, dosage, price)`.
    fn dispense(&mut self, sales: &str, control: &str, prescription: &str, medication: &[u8]) -> PyResult<(String, String, u64)> {
        let m = self
            .ctx
            .pharmacy_dispense(instance(sales)?, instance(control)?, instance(prescription)?, medication)
            .map_err(workflow_err)?;
        Ok((m.name, m.dosage, m.price))
    }

    fn verify_compliance<'py>(&mut self, py: Python<'py>, control: &str, sales: &str) -> PyResult<Bound<'py, PyDict>> {
        let r = self
            .ctx
            .regulator_verify_compliance(instance(control)?, instance(sales)?)
            .map_err(workflow_err)?;
        let d = PyDict::new(py);
        d.set_item("supplied", r.supplied)?;
        d.set_item("sold", r.sold)?;
        d.set_item("sales_count", r.sales_count)?;
        d.set_item("consistent", r.consistent)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Stakeholder(role={}, address={})", self.role(), self.address())
    }
}

/// Verdict for an exported chain: `(True, None, None)` or
/// `(False, height, reason)`.
#[pyfunction]
fn verify_chain_export(text: &str) -> (bool, Option<u64>, Option<String>) {
    match verify_chain_text(text) {
        ChainVerdict::Valid => (true, None, None),
        ChainVerdict::Invalid { height, reason } => (false, Some(height), Some(reason.to_string())),
    }
}

/// Lineage of a prescription as JSON, reconstructed from an exported chain.
#[pyfunction]
fn lineage(chain: &str, prescription: &str) -> PyResult<String> {
    let blocks = import_chain(chain).map_err(value_err)?;
    let record = provenance::lineage(&blocks, instance(prescription)?).map_err(value_err)?;
    Ok(record.to_json())
}

/// Runs a scenario given as text or a bundled name. Returns a dict with the
/// step reports, final state root and exported chain.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, source: &str) -> PyResult<Bound<'py, PyDict>> {
    let text = scenario::bundled(source).unwrap_or(source);
    let parsed = Scenario::parse(text).map_err(|e| ScenarioError::new_err((e.line(), e.to_string())))?;
    let outcome = py
        .detach(|| parsed.run())
        .map_err(|e| ScenarioError::new_err((e.line(), e.to_string())))?;
    let d = PyDict::new(py);
    d.set_item("steps", outcome.steps.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    d.set_item("state_root", hex_digest(&outcome.state_root()))?;
    d.set_item("chain", export_chain(&outcome.chain()))?;
    d.set_item("bindings", outcome.bindings.clone())?;
    Ok(d)
}

/// Simulated inclusion latencies: `(submitted_ms, committed_ms, latency_ms)`
/// per transaction.
#[pyfunction]
#[pyo3(signature = (n_txs=300, interval_ms=ChainConfig::default().block_interval_ms, seed=1))]
fn bench_ledger(py: Python<'_>, n_txs: usize, interval_ms: u64, seed: u64) -> PyResult<Vec<(u64, u64, u64)>> {
    if n_txs == 0 {
        return Err(PyValueError::new_err("n_txs must be at least 1"));
    }
    let config = bench::LedgerBenchConfig {
        n_txs,
        interval_ms,
        seed,
    };
    let records = py.detach(|| bench::bench_ledger(&config)).map_err(pre_err)?;
    Ok(records
        .into_iter()
        .map(|r| (r.submitted_ms, r.committed_ms, r.latency_ms))
        .collect())
}

#[pymodule]
fn rxledger(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("PreError", py.get_type::<PreError>())?;
    m.add("WorkflowError", py.get_type::<WorkflowError>())?;
    m.add("ScenarioError", py.get_type::<ScenarioError>())?;
    m.add_class::<KeyPair>()?;
    m.add_class::<Ledger>()?;
    m.add_class::<Stakeholder>()?;
    m.add_function(wrap_pyfunction!(encrypt, m)?)?;
    m.add_function(wrap_pyfunction!(decrypt, m)?)?;
    m.add_function(wrap_pyfunction!(delegate, m)?)?;
    m.add_function(wrap_pyfunction!(reencrypt, m)?)?;
    m.add_function(wrap_pyfunction!(decrypt_reencrypted, m)?)?;
    m.add_function(wrap_pyfunction!(verify_chain_export, m)?)?;
    m.add_function(wrap_pyfunction!(lineage, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(bench_ledger, m)?)?;
    Ok(())
}
