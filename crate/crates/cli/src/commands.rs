use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand_chacha::ChaCha20Rng;
use rand_core::{OsRng, SeedableRng};

use rxledger_core::bench::{
    self, expected_latency_ms, latency_stats, ledger_csv, pre_csv_row, pre_summary,
    pre_summary_text, AllocationProbe, LedgerBenchConfig, NoProbe, PreBenchConfig, SizeProfile,
    LEDGER_REFERENCE, PRE_CSV_HEADER,
};
use rxledger_core::contracts::ContractKind;
use rxledger_core::kat::{self, KatRecord};
use rxledger_core::ledger::{import_chain, verify_chain, Address, ChainConfig, ChainVerdict, InstanceId};
use rxledger_core::pre;
use rxledger_core::provenance::ChainIndex;
use rxledger_core::scenario::{self, Scenario, ScenarioError};
use rxledger_core::stakeholder::derive_seed;

use crate::alloc::{CountingAlloc, PeakProbe};
use crate::{AuditArgs, BenchLedgerArgs, BenchPreArgs, Format, KeygenArgs, RunArgs, VerifyArgs};

const FAILED: u8 = 1;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn keygen(args: KeygenArgs) -> Result<ExitCode> {
    if let Some(n) = args.kat {
        let records = (0..n)
            .map(|i| KatRecord::generate(kat::seed_for(i)))
            .collect::<Result<Vec<_>, _>>()?;
        print!("{}", kat::render(&records));
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(path) = args.check_kat {
        return Ok(match kat::check(&read(&path)?) {
            Ok(n) => {
                println!("{n} vectors match");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                ExitCode::from(FAILED)
            }
        });
    }

    let keys = match args.seed {
        Some(seed) => {
            let mut rng = ChaCha20Rng::from_seed(derive_seed(&[b"keygen", &seed.to_be_bytes()]));
            pre::keygen(&mut rng)?
        }
        None => pre::keygen(&mut OsRng)?,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let secret = args.out.join("secret.key");
    let public = args.out.join("public.key");
    for p in [&secret, &public] {
        if p.exists() && !args.force {
            bail!("{} exists (use --force to overwrite)", p.display());
        }
    }
    fs::write(&secret, format!("{}\n", hex::encode(keys.secret.to_bytes())))?;
    fs::write(&public, format!("{}\n", keys.public.to_hex()))?;
    println!("public_key {}", keys.public.to_hex());
    println!("address    {}", Address::from_public_key(&keys.public));
    println!("wrote      {} and {}", secret.display(), public.display());
    Ok(ExitCode::SUCCESS)
}

fn load_scenario(spec: &str) -> Result<(String, String)> {
    let path = Path::new(spec);
    if path.exists() {
        return Ok((path.display().to_string(), read(path)?));
    }
    match scenario::bundled(spec) {
        Some(text) => Ok((spec.to_string(), text.to_string())),
        None => bail!("{spec}: no such file or bundled scenario (bundled: demo_full_flow, pharmacy_requests_pi)"),
    }
}

pub fn run(args: RunArgs) -> Result<ExitCode> {
    let (name, text) = load_scenario(&args.scenario)?;
    let mut scenario = match Scenario::parse(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{name}: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let mut report = format!(
        "scenario {name} (seed {}, interval {} ms, {} actors, {} steps)\n",
        scenario.seed,
        scenario.config.block_interval_ms,
        scenario.actors.len(),
        scenario.steps.len()
    );
    print!("{report}");
    let result = scenario.run_with(|step| {
        let line = format!("{step}\n");
        print!("{line}");
        report.push_str(&line);
    });
    let code = match result {
        Ok(outcome) => {
            let chain = outcome.chain();
            let summary = format!(
                "ok: {} steps, {} blocks, state_root {}\n",
                outcome.steps.len(),
                chain.len(),
                hex::encode(outcome.state_root())
            );
            print!("{summary}");
            report.push_str(&summary);
            if let Some(path) = &args.chain_out {
                fs::write(path, rxledger_core::ledger::export_chain(&chain))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = format!("FAIL {name}: {e}\n");
            eprint!("{line}");
            report.push_str(&line);
            match e {
                ScenarioError::Assertion { .. } => ExitCode::from(FAILED),
                _ => ExitCode::from(2),
            }
        }
    };
    if let Some(path) = &args.report_out {
        fs::write(path, &report).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(code)
}

fn parse_instance(s: &str) -> Result<InstanceId> {
    InstanceId::from_hex(s).with_context(|| format!("{s:?} is not a 16-digit hex instance id"))
}

pub fn audit(args: AuditArgs) -> Result<ExitCode> {
    let chain = import_chain(&read(&args.chain)?)?;
    let verdict = verify_chain(&chain);
    if !verdict.is_valid() {
        eprintln!("{}: chain is {verdict}; refusing to audit", args.chain.display());
        return Ok(ExitCode::from(FAILED));
    }
    let index = ChainIndex::build(&chain);
    let Some(id) = args.instance.as_deref() else {
        for (id, kind) in index.instances() {
            println!("{id} {kind}");
        }
        return Ok(ExitCode::SUCCESS);
    };
    let id = parse_instance(id)?;
    let kind = index
        .instances()
        .find(|(i, _)| *i == id)
        .map(|(_, k)| k)
        .with_context(|| format!("instance {id} is not on this chain"))?;
    let json = args.format == Format::Json;
    match kind {
        ContractKind::Prescription => {
            let lineage = index.lineage(id)?;
            if json {
                println!("{}", lineage.to_json());
            } else {
                print!("{}", lineage.to_text());
            }
        }
        ContractKind::Consent => {
            let history = index.consent_history(id)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&history)?);
            } else {
                println!("consent {id}: {} requests", history.len());
                for r in &history {
                    println!(
                        "  request {} from {} requested {} granted {} status {:?} at h={}",
                        r.request_id, r.requester, r.items_requested, r.items_granted, r.status, r.requested_at
                    );
                }
            }
        }
        ContractKind::MedicationControl => {
            let sales = args
                .sales
                .as_deref()
                .context("a medication_control audit needs --sales <instance>")?;
            let report = index.compliance_report(id, parse_instance(sales)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!(
                    "supplied {} sold {} sales {} consistent {}",
                    report.supplied, report.sold, report.sales_count, report.consistent
                );
            }
        }
        other => bail!("no audit view for {other} instances"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let text = read(&args.chain)?;
    let verdict = rxledger_core::ledger::verify_chain_text(&text);
    if args.format == Format::Json {
        println!("{}", serde_json::to_string(&verdict)?);
    } else {
        match verdict {
            ChainVerdict::Valid => {
                let chain = import_chain(&text)?;
                let head = chain.last().expect("valid chains are non-empty");
                println!(
                    "valid: {} blocks, head {}, state_root {}",
                    chain.len(),
                    head.height,
                    hex::encode(head.state_root)
                );
            }
            ChainVerdict::Invalid { .. } => println!("{verdict}"),
        }
    }
    Ok(if verdict.is_valid() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILED)
    })
}

pub fn bench_pre(args: BenchPreArgs, alloc: &'static CountingAlloc) -> Result<ExitCode> {
    let profile: SizeProfile = args.profile.parse().map_err(anyhow::Error::msg)?;
    let mut config = PreBenchConfig::from_profile(profile, args.seed);
    if let Some(n) = args.iterations {
        config.iterations = n;
    }
    let peak = PeakProbe::new(alloc);
    let probe: &dyn AllocationProbe = if args.no_alloc { &NoProbe } else { &peak };

    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{PRE_CSV_HEADER}")?;
    let mut io_error = None;
    let start = Instant::now();
    let records = bench::bench_pre(&config, probe, |r| {
        if io_error.is_none() {
            io_error = writeln!(out, "{}", pre_csv_row(r)).err();
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    out.flush()?;
    let summary = pre_summary_text(&pre_summary(&records));
    eprintln!(
        "{} iterations, {} records, {:.1} s",
        config.iterations,
        records.len(),
        start.elapsed().as_secs_f64()
    );
    eprint!("{summary}");
    if let Some(path) = &args.summary {
        fs::write(path, &summary).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn bench_ledger(args: BenchLedgerArgs) -> Result<ExitCode> {
    if args.n_txs == 0 {
        bail!("--n-txs must be at least 1");
    }
    let profile = match args.profile.as_str() {
        "default" => ChainConfig::default(),
        "ethereum" => ChainConfig::ethereum(),
        other => bail!("unknown chain profile {other:?} (default or ethereum)"),
    };
    let config = LedgerBenchConfig {
        n_txs: args.n_txs,
        interval_ms: args.interval.unwrap_or(profile.block_interval_ms),
        seed: args.seed,
    };
    let records = bench::bench_ledger(&config)?;
    let mut out = output(args.out.as_deref())?;
    out.write_all(ledger_csv(&records).as_bytes())?;
    out.flush()?;
    let s = latency_stats(&records).expect("n_txs >= 1");
    eprintln!("latency_ms,count,min,max,avg,std");
    eprintln!("measured,{},{:.0},{:.0},{:.1},{:.1}", s.count, s.min, s.max, s.avg, s.std);
    eprintln!(
        "reference,{},{:.0},{:.0},{:.1},{:.1}",
        LEDGER_REFERENCE.count, LEDGER_REFERENCE.min, LEDGER_REFERENCE.max, LEDGER_REFERENCE.avg, LEDGER_REFERENCE.std
    );
    eprintln!("expected avg for uniform arrivals: {:.1}", expected_latency_ms(config.interval_ms));
    Ok(ExitCode::SUCCESS)
}
