//! `rxledger`: key generation, scenario runs, chain audit and benchmarks.

mod alloc;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[global_allocator]
static ALLOC: alloc::CountingAlloc = alloc::CountingAlloc::new();

#[derive(Parser)]
#[command(name = "rxledger", version, about = "E-prescription data governance on a simulated ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair, or emit / check known-answer vectors.
    Keygen(KeygenArgs),
    /// Run a scenario file or a bundled scenario and check every expectation.
    Run(RunArgs),
    /// Reconstruct lineage, consent history or compliance from a chain file.
    Audit(AuditArgs),
    /// Verify an exported chain.
    Verify(VerifyArgs),
    /// Time encrypt, delegate, re-encrypt and decrypt per item kind.
    BenchPre(BenchPreArgs),
    /// Simulate inclusion latency of prescription transactions.
    BenchLedger(BenchLedgerArgs),
}

#[derive(Args)]
pub struct KeygenArgs {
    /// Derive the key pair from this seed instead of OS entropy.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for secret.key and public.key.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overwrite existing key files.
    #[arg(long)]
    pub force: bool,
    /// Print this many known-answer vectors instead of writing keys.
    #[arg(long, conflicts_with_all = ["seed", "check_kat"])]
    pub kat: Option<u64>,
    /// Regenerate every vector in FILE and compare.
    #[arg(long, value_name = "FILE", conflicts_with = "seed")]
    pub check_kat: Option<PathBuf>,
}

#[derive(Args)]
pub struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    pub scenario: String,
    /// Replace the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the exported chain here.
    #[arg(long, value_name = "FILE")]
    pub chain_out: Option<PathBuf>,
    /// Write the outcome report here as well as to stdout.
    #[arg(long, value_name = "FILE")]
    pub report_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AuditArgs {
    /// Exported chain file.
    pub chain: PathBuf,
    /// Instance id (16 hex digits). Lists all instances when omitted.
    pub instance: Option<String>,
    /// Sales instance to pair with a medication-control instance.
    #[arg(long)]
    pub sales: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Exported chain file.
    pub chain: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Args)]
pub struct BenchPreArgs {
    /// Size profile: paper, quick, small or average.
    #[arg(long, default_value = "quick")]
    pub profile: String,
    /// Override the profile's iteration count.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write the per operation and item summary CSV here.
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
    /// Skip heap tracking and leave the peak column blank.
    #[arg(long)]
    pub no_alloc: bool,
}

#[derive(Args)]
pub struct BenchLedgerArgs {
    #[arg(long, default_value_t = 300)]
    pub n_txs: usize,
    /// Block interval in ms; defaults to the chain profile's interval.
    #[arg(long)]
    pub interval: Option<u64>,
    /// Chain profile: default (6130 ms) or ethereum (12000 ms).
    #[arg(long, default_value = "default")]
    pub profile: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen(a) => commands::keygen(a),
        Command::Run(a) => commands::run(a),
        Command::Audit(a) => commands::audit(a),
        Command::Verify(a) => commands::verify(a),
        Command::BenchPre(a) => commands::bench_pre(a, &ALLOC),
        Command::BenchLedger(a) => commands::bench_ledger(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
