//! Benchmark harnesses.
//!
//! [`bench_pre`] times the four PRE steps on wall-clock time over randomly
//! sized prescription items. [`bench_ledger`] measures transaction inclusion
//! latency on the simulated ledger clock.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::Serialize;

use crate::contracts::{Call, ContractKind, Item};
use crate::ledger::{
    Address, ChainConfig, InstanceId, Ledger, Registration, SignedTransaction,
};
use crate::pre::{self, PreError};
use crate::stakeholder::Role;

pub const KB: f64 = 1024.0;

/// Item size ranges in kB (1 kB = 1024 bytes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeRanges {
    pub pi: (f64, f64),
    pub med: (f64, f64),
    pub dia: (f64, f64),
}

impl SizeRanges {
    pub fn range(&self, item: Item) -> (f64, f64) {
        match item {
            Item::Pi => self.pi,
            Item::Med => self.med,
            Item::Dia => self.dia,
        }
    }

    pub fn sample_kb<R: Rng + ?Sized>(&self, item: Item, rng: &mut R) -> f64 {
        let (lo, hi) = self.range(item);
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    }
}

pub fn kb_to_bytes(kb: f64) -> usize {
    (kb * KB).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeProfile {
    /// Observed prescription file ranges, 1000 iterations.
    Paper,
    /// Same ranges as `Paper` with diagnosis capped at 512 kB, 100 iterations.
    Quick,
    /// Fixed mid-range sizes with a small diagnosis, for scenarios.
    Small,
    /// Fixed average sizes of the observed files.
    Average,
}

impl SizeProfile {
    pub fn ranges(self) -> SizeRanges {
        match self {
            SizeProfile::Paper => SizeRanges {
                pi: (0.43, 0.82),
                med: (0.24, 0.53),
                dia: (2.18, 8975.74),
            },
            SizeProfile::Quick => SizeRanges {
                pi: (0.43, 0.82),
                med: (0.24, 0.53),
                dia: (2.18, 512.0),
            },
            SizeProfile::Small => SizeRanges {
                pi: (0.62, 0.62),
                med: (0.39, 0.39),
                dia: (2.18, 2.18),
            },
            SizeProfile::Average => SizeRanges {
                pi: (0.62, 0.62),
                med: (0.39, 0.39),
                dia: (4538.57, 4538.57),
            },
        }
    }

    pub fn default_iterations(self) -> usize {
        match self {
            SizeProfile::Paper => 1000,
            _ => 100,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeProfile::Paper => "paper",
            SizeProfile::Quick => "quick",
            SizeProfile::Small => "small",
            SizeProfile::Average => "average",
        }
    }
}

impl FromStr for SizeProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(SizeProfile::Paper),
            "quick" => Ok(SizeProfile::Quick),
            "small" => Ok(SizeProfile::Small),
            "average" => Ok(SizeProfile::Average),
            _ => Err(format!("unknown size profile {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PreOp {
    Encrypt,
    Delegate,
    Reencrypt,
    Decrypt,
}

impl PreOp {
    pub const ALL: [PreOp; 4] = [PreOp::Encrypt, PreOp::Delegate, PreOp::Reencrypt, PreOp::Decrypt];

    pub fn as_str(self) -> &'static str {
        match self {
            PreOp::Encrypt => "encrypt",
            PreOp::Delegate => "delegate",
            PreOp::Reencrypt => "reencrypt",
            PreOp::Decrypt => "decrypt",
        }
    }

    /// Published average wall time in ms for this step on `item`.
    pub fn reference_ms(self, item: Item) -> f64 {
        match (self, item) {
            (PreOp::Encrypt, Item::Dia) => 6.98,
            (PreOp::Encrypt, Item::Med) => 1.63,
            (PreOp::Encrypt, Item::Pi) => 1.75,
            (PreOp::Delegate, Item::Dia) => 4.78,
            (PreOp::Delegate, Item::Med) => 4.53,
            (PreOp::Delegate, Item::Pi) => 4.62,
            (PreOp::Reencrypt, Item::Dia) => 2.43,
            (PreOp::Reencrypt, Item::Med) => 2.32,
            (PreOp::Reencrypt, Item::Pi) => 2.35,
            (PreOp::Decrypt, Item::Dia) => 8.67,
            (PreOp::Decrypt, Item::Med) => 3.18,
            (PreOp::Decrypt, Item::Pi) => 3.27,
        }
    }
}

impl fmt::Display for PreOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Peak heap usage during a measured region, if the host can observe it.
pub trait AllocationProbe {
    fn start(&self);
    fn peak_bytes(&self) -> Option<u64>;
}

pub struct NoProbe;

impl AllocationProbe for NoProbe {
    fn start(&self) {}

    fn peak_bytes(&self) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub iteration: usize,
    pub operation: PreOp,
    pub item: Item,
    pub size_kb: f64,
    pub wall_ms: f64,
    pub peak_alloc_bytes: Option<u64>,
}

pub const PRE_CSV_HEADER: &str = "iteration,operation,item,size_kb,wall_ms,peak_alloc_bytes";

/// One CSV line for `r`, without the trailing newline.
pub fn pre_csv_row(r: &BenchRecord) -> String {
    let peak = r.peak_alloc_bytes.map_or(String::new(), |p| p.to_string());
    format!(
        "{},{},{},{:.2},{:.4},{}",
        r.iteration,
        r.operation,
        r.item.as_str(),
        r.size_kb,
        r.wall_ms,
        peak
    )
}

pub fn pre_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(PRE_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&pre_csv_row(r));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n;
        Some(Stats {
            count: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            avg,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreSummaryRow {
    pub operation: PreOp,
    pub item: Item,
    pub wall_ms: Stats,
    pub reference_avg_ms: f64,
}

pub fn pre_summary(records: &[BenchRecord]) -> Vec<PreSummaryRow> {
    let mut rows = Vec::new();
    for op in PreOp::ALL {
        for item in [Item::Dia, Item::Med, Item::Pi] {
            let times: Vec<f64> = records
                .iter()
                .filter(|r| r.operation == op && r.item == item)
                .map(|r| r.wall_ms)
                .collect();
            if let Some(wall_ms) = Stats::of(&times) {
                rows.push(PreSummaryRow {
                    operation: op,
                    item,
                    wall_ms,
                    reference_avg_ms: op.reference_ms(item),
                });
            }
        }
    }
    rows
}

pub fn pre_summary_text(rows: &[PreSummaryRow]) -> String {
    let mut out = String::from("operation,item,count,min_ms,max_ms,avg_ms,std_ms,reference_avg_ms\n");
    for r in rows {
        let s = r.wall_ms;
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.2}",
            r.operation,
            r.item.as_str(),
            s.count,
            s.min,
            s.max,
            s.avg,
            s.std,
            r.reference_avg_ms
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct PreBenchConfig {
    pub ranges: SizeRanges,
    pub iterations: usize,
    pub seed: u64,
}

impl PreBenchConfig {
    pub fn from_profile(profile: SizeProfile, seed: u64) -> Self {
        Self {
            ranges: profile.ranges(),
            iterations: profile.default_iterations(),
            seed,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Pre(#[from] PreError),
    #[error("iteration {iteration}: {item:?} round trip returned different bytes")]
    Mismatch { iteration: usize, item: Item },
}

fn timed<T>(probe: &dyn AllocationProbe, f: impl FnOnce() -> T) -> (T, f64, Option<u64>) {
    probe.start();
    let start = Instant::now();
    let out = f();
    let ms = start.elapsed().as_secs_f64() * 1000.0;
    (out, ms, probe.peak_bytes())
}

/// Runs encrypt, delegate, re-encrypt and decrypt for each item of every
/// iteration, checking that each round trip returns the plaintext.
pub fn bench_pre(
    config: &PreBenchConfig,
    probe: &dyn AllocationProbe,
    mut on_record: impl FnMut(&BenchRecord),
) -> Result<Vec<BenchRecord>, BenchError> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut records = Vec::with_capacity(config.iterations * 12);
    let mut push = |r: BenchRecord, records: &mut Vec<BenchRecord>| {
        on_record(&r);
        records.push(r);
    };
    for iteration in 0..config.iterations {
        let patient = pre::keygen(&mut rng)?;
        let consumer = pre::keygen(&mut rng)?;
        for item in [Item::Pi, Item::Med, Item::Dia] {
            let size_kb = config.ranges.sample_kb(item, &mut rng);
            let mut plaintext = vec![0u8; kb_to_bytes(size_kb)];
            rng.fill_bytes(&mut plaintext);
            let ad = item.as_str().as_bytes();

            let (ct, enc_ms, enc_peak) =
                timed(probe, || pre::encrypt(&patient.public, &plaintext, ad, &mut rng));
            let ct = ct?;
            let (dk, dk_ms, dk_peak) = timed(probe, || {
                pre::generate_delegation_key(&patient.secret, &consumer.public, &mut rng)
            });
            let dk = dk?;
            let (re, re_ms, re_peak) = timed(probe, || pre::reencrypt(&dk, &ct.capsule, &mut rng));
            let re = re?;
            let (pt, dec_ms, dec_peak) = timed(probe, || {
                pre::decrypt_reencrypted(&consumer.secret, &patient.public, &re, &ct)
            });
            if pt? != plaintext {
                return Err(BenchError::Mismatch { iteration, item });
            }
            for (operation, wall_ms, peak) in [
                (PreOp::Encrypt, enc_ms, enc_peak),
                (PreOp::Delegate, dk_ms, dk_peak),
                (PreOp::Reencrypt, re_ms, re_peak),
                (PreOp::Decrypt, dec_ms, dec_peak),
            ] {
                push(
                    BenchRecord {
                        iteration,
                        operation,
                        item,
                        size_kb,
                        wall_ms,
                        peak_alloc_bytes: peak,
                    },
                    &mut records,
                );
            }
        }
    }
    Ok(records)
}

/// Published create_prescription inclusion times, in ms.
pub const LEDGER_REFERENCE: Stats = Stats {
    count: 300,
    min: 1500.0,
    max: 6260.0,
    avg: 2690.0,
    std: 710.0,
};

/// Prescription sizes used in the published latency runs, in kB.
pub const LEDGER_TX_SIZE_KB: (f64, f64) = (0.92, 130.50);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRecord {
    pub tx: usize,
    pub size_kb: f64,
    pub submitted_ms: u64,
    pub committed_ms: u64,
    pub height: u64,
    pub latency_ms: u64,
}

pub const LEDGER_CSV_HEADER: &str = "tx,size_kb,submitted_ms,committed_ms,height,latency_ms";

pub fn ledger_csv(records: &[LatencyRecord]) -> String {
    let mut out = String::from(LEDGER_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.2},{},{},{},{}",
            r.tx, r.size_kb, r.submitted_ms, r.committed_ms, r.height, r.latency_ms
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct LedgerBenchConfig {
    pub n_txs: usize,
    pub interval_ms: u64,
    pub seed: u64,
}

/// Expected inclusion latency for arrivals uniform over the block interval.
pub fn expected_latency_ms(interval_ms: u64) -> f64 {
    interval_ms as f64 / 2.0
}

fn prescription_call<R: RngCore + rand_core::CryptoRng>(
    patient: &pre::PublicKey,
    rng: &mut R,
) -> Result<(Call, f64), PreError> {
    let total_kb = rng.gen_range(LEDGER_TX_SIZE_KB.0..=LEDGER_TX_SIZE_KB.1);
    let pi_kb = rng.gen_range(0.43..=0.82_f64).min(total_kb / 3.0);
    let med_kb = rng.gen_range(0.24..=0.53_f64).min(total_kb / 3.0);
    let dia_kb = total_kb - pi_kb - med_kb;
    let item = |kb: f64, label: Item, rng: &mut R| {
        let mut data = vec![0u8; kb_to_bytes(kb)];
        rng.fill_bytes(&mut data);
        pre::encrypt(patient, &data, label.as_str().as_bytes(), rng)
    };
    let c_pi = item(pi_kb, Item::Pi, rng)?;
    let c_med = item(med_kb, Item::Med, rng)?;
    let c_dia = item(dia_kb, Item::Dia, rng)?;
    Ok((Call::CreatePrescription { c_pi, c_med, c_dia }, total_kb))
}

/// Submits `n_txs` prescriptions at uniformly random simulated times and
/// reports when each was committed. Blocks are produced on every interval
/// boundary; with interval 0 each arrival is committed immediately.
pub fn bench_ledger(config: &LedgerBenchConfig) -> Result<Vec<LatencyRecord>, PreError> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let doctor = pre::keygen(&mut rng)?;
    let patient = pre::keygen(&mut rng)?;
    let doctor_addr = Address::from_public_key(&doctor.public);
    let patient_addr = Address::from_public_key(&patient.public);
    let mut ledger = Ledger::new(
        ChainConfig {
            block_interval_ms: config.interval_ms,
            skip_empty: false,
        },
        vec![
            Registration {
                public_key: doctor.public,
                role: Some(Role::Doctor),
            },
            Registration {
                public_key: patient.public,
                role: Some(Role::Patient),
            },
        ],
    )
    .expect("distinct genesis accounts");

    let span = config.interval_ms.max(1) * config.n_txs as u64;
    let mut arrivals: Vec<u64> = (0..config.n_txs).map(|_| rng.gen_range(0..span)).collect();
    arrivals.sort_unstable();

    let mut pending = Vec::new();
    let mut records = Vec::with_capacity(config.n_txs);
    for (tx, &arrival) in arrivals.iter().enumerate() {
        if config.interval_ms > 0 {
            while ledger.next_block_time() < arrival {
                let at = ledger.next_block_time();
                ledger.produce_block(at);
                settle(&ledger, &mut pending, &mut records);
            }
        }
        let nonce = ledger.next_nonce(&doctor_addr).expect("registered");
        let id = InstanceId::derive(&doctor_addr, nonce);
        let open = Call::Instantiate {
            kind: ContractKind::Prescription,
            recipient: patient_addr,
            mint: 0,
        };
        let (create, size_kb) = prescription_call(&patient.public, &mut rng)?;
        ledger
            .submit_transaction(SignedTransaction::sign(&doctor.secret, nonce, id, &open))
            .expect("valid instantiate");
        ledger
            .submit_transaction(SignedTransaction::sign(&doctor.secret, nonce + 1, id, &create))
            .expect("valid create_prescription");
        pending.push(Pending {
            tx,
            nonce: nonce + 1,
            submitted_ms: arrival,
            size_kb,
        });
        if config.interval_ms == 0 {
            ledger.produce_block(arrival).expect("interval 0 always produces");
            settle(&ledger, &mut pending, &mut records);
        }
    }
    if !pending.is_empty() {
        ledger.produce_next_block().expect("boundary reached");
        settle(&ledger, &mut pending, &mut records);
    }
    Ok(records)
}

struct Pending {
    tx: usize,
    nonce: u64,
    submitted_ms: u64,
    size_kb: f64,
}

fn settle(ledger: &Ledger, pending: &mut Vec<Pending>, records: &mut Vec<LatencyRecord>) {
    let block = ledger.head();
    for p in pending.drain(..) {
        debug_assert!(block.txs.iter().any(|i| i.tx.nonce == p.nonce && i.outcome.is_applied()));
        records.push(LatencyRecord {
            tx: p.tx,
            size_kb: p.size_kb,
            submitted_ms: p.submitted_ms,
            committed_ms: block.timestamp,
            height: block.height,
            latency_ms: block.timestamp - p.submitted_ms,
        });
    }
}

pub fn latency_stats(records: &[LatencyRecord]) -> Option<Stats> {
    let values: Vec<f64> = records.iter().map(|r| r.latency_ms as f64).collect();
    Stats::of(&values)
}
