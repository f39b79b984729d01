//! Data governance for e-prescriptions on a simulated ledger.
//!
//! * [`pre`]: proxy re-encryption over secp256k1.
//! * [`ledger`]: signed transactions, block production and chain verification.
//! * [`contracts`]: the six contract state machines.
//! * [`stakeholder`]: doctor, patient, pharmacy and regulator workflows.
//! * [`provenance`]: lineage and audit reconstruction from committed blocks.
//! * [`scenario`], [`bench`], [`kat`]: scenario runner, benchmarks and test vectors.

pub mod bench;
pub mod codec;
pub mod pre;
pub mod contracts;
pub mod kat;
pub mod ledger;
pub mod provenance;
pub mod scenario;
pub mod stakeholder;

#[cfg(test)]
pub(crate) mod testutil;
