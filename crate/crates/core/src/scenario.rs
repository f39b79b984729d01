//! Line-based scenario files and their runner.
//!
//! ```text
//! # comment
//! seed 42
//! interval 6130            # or: profile ethereum
//! skip_empty off
//! sizes small              # paper | quick | small | average
//! actor alice patient
//! step <actor> <op> key=value ... [expect ok | expect key=value ...]
//! ```
//!
//! Values may be quoted. `as=name` binds a step's result (an instance id, a
//! request id or a plaintext) to `name` for later steps; `$name` inserts a
//! bound plaintext into a text argument. Every step is committed in its own
//! block before the next one runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_core::RngCore;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use thiserror::Error;

use crate::bench::{kb_to_bytes, SizeProfile};
use crate::contracts::{Call, ContractKind, Decision, Item, ItemSet, RequestId};
use crate::ledger::{Block, ChainConfig, Hash32, InstanceId, Ledger};
use crate::stakeholder::{
    derive_seed, shared, LedgerHandle, Role, StakeholderContext, WorkflowError,
};

pub const DEMO_FULL_FLOW: &str = include_str!("../scenarios/demo_full_flow.scn");
pub const PHARMACY_REQUESTS_PI: &str = include_str!("../scenarios/pharmacy_requests_pi.scn");

/// Bundled scenarios by name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "demo_full_flow" => Some(DEMO_FULL_FLOW),
        "pharmacy_requests_pi" => Some(PHARMACY_REQUESTS_PI),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    OpenConsent,
    Open,
    Prescribe,
    Request,
    Approve,
    Access,
    Supply,
    Dispense,
    Sell,
    UpdateSold,
    RecordAccess,
    VerifyCompliance,
    Report,
    Reward,
    ReportAndReward,
}

impl Op {
    const ALL: [(&'static str, Op); 15] = [
        ("open_consent", Op::OpenConsent),
        ("open", Op::Open),
        ("prescribe", Op::Prescribe),
        ("request", Op::Request),
        ("approve", Op::Approve),
        ("access", Op::Access),
        ("supply", Op::Supply),
        ("dispense", Op::Dispense),
        ("sell", Op::Sell),
        ("update_sold", Op::UpdateSold),
        ("record_access", Op::RecordAccess),
        ("verify_compliance", Op::VerifyCompliance),
        ("report", Op::Report),
        ("reward", Op::Reward),
        ("report_and_reward", Op::ReportAndReward),
    ];

    fn parse(s: &str) -> Option<Op> {
        Self::ALL.iter().find(|(name, _)| *name == s).map(|(_, op)| *op)
    }

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(_, op)| *op == self).expect("listed").0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub line: usize,
    pub actor: String,
    pub op: Op,
    pub args: BTreeMap<String, String>,
    /// Empty means the step must succeed.
    pub expect: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub config: ChainConfig,
    pub sizes: SizeProfile,
    pub actors: Vec<(String, Role)>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Step { line: usize, message: String },
    #[error("line {line}: expected {expected}, got {actual}")]
    Assertion {
        line: usize,
        expected: String,
        actual: String,
    },
}

impl ScenarioError {
    pub fn line(&self) -> usize {
        match self {
            ScenarioError::Parse { line, .. }
            | ScenarioError::Step { line, .. }
            | ScenarioError::Assertion { line, .. } => *line,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

fn split_pair(line: usize, token: &str) -> Result<(String, String), ScenarioError> {
    token
        .split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| parse_err(line, format!("expected key=value, got {token:?}")))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut scenario = Scenario {
            seed: 0,
            config: ChainConfig::default(),
            sizes: SizeProfile::Small,
            actors: Vec::new(),
            steps: Vec::new(),
        };
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tokens =
                shlex::split(trimmed).ok_or_else(|| parse_err(line, "unbalanced quotes"))?;
            let arg = |i: usize| {
                tokens
                    .get(i)
                    .map(String::as_str)
                    .ok_or_else(|| parse_err(line, format!("{} needs more arguments", tokens[0])))
            };
            let only = |n: usize| {
                if tokens.len() == n {
                    Ok(())
                } else {
                    Err(parse_err(line, format!("{} takes {} argument(s)", tokens[0], n - 1)))
                }
            };
            match tokens[0].as_str() {
                "seed" => {
                    only(2)?;
                    scenario.seed = arg(1)?
                        .parse()
                        .map_err(|_| parse_err(line, "seed must be an integer"))?;
                }
                "interval" => {
                    only(2)?;
                    scenario.config.block_interval_ms = arg(1)?
                        .parse()
                        .map_err(|_| parse_err(line, "interval must be milliseconds"))?;
                }
                "profile" => {
                    only(2)?;
                    scenario.config.block_interval_ms = match arg(1)? {
                        "default" => ChainConfig::default().block_interval_ms,
                        "ethereum" => ChainConfig::ethereum().block_interval_ms,
                        other => return Err(parse_err(line, format!("unknown profile {other:?}"))),
                    };
                }
                "skip_empty" => {
                    only(2)?;
                    scenario.config.skip_empty = match arg(1)? {
                        "on" | "true" => true,
                        "off" | "false" => false,
                        other => return Err(parse_err(line, format!("expected on|off, got {other:?}"))),
                    };
                }
                "sizes" => {
                    only(2)?;
                    scenario.sizes = arg(1)?.parse().map_err(|e: String| parse_err(line, e))?;
                }
                "actor" => {
                    only(3)?;
                    let name = arg(1)?.to_string();
                    let role = arg(2)?.parse().map_err(|e: String| parse_err(line, e))?;
                    if scenario.actors.iter().any(|(n, _)| *n == name) {
                        return Err(parse_err(line, format!("actor {name:?} declared twice")));
                    }
                    scenario.actors.push((name, role));
                }
                "step" => scenario.steps.push(Self::parse_step(line, &tokens, &scenario.actors)?),
                other => return Err(parse_err(line, format!("unknown directive {other:?}"))),
            }
        }
        Ok(scenario)
    }

    fn parse_step(
        line: usize,
        tokens: &[String],
        actors: &[(String, Role)],
    ) -> Result<Step, ScenarioError> {
        if tokens.len() < 3 {
            return Err(parse_err(line, "step needs an actor and an operation"));
        }
        let actor = tokens[1].clone();
        if !actors.iter().any(|(n, _)| *n == actor) {
            return Err(parse_err(line, format!("unknown actor {actor:?}")));
        }
        let op = Op::parse(&tokens[2])
            .ok_or_else(|| parse_err(line, format!("unknown operation {:?}", tokens[2])))?;
        let mut args = BTreeMap::new();
        let mut expect = BTreeMap::new();
        let mut in_expect = false;
        for token in &tokens[3..] {
            if token == "expect" {
                if in_expect {
                    return Err(parse_err(line, "expect given twice"));
                }
                in_expect = true;
            } else if in_expect && token == "ok" {
                continue;
            } else {
                let (k, v) = split_pair(line, token)?;
                let target = if in_expect { &mut expect } else { &mut args };
                if target.insert(k.clone(), v).is_some() {
                    return Err(parse_err(line, format!("{k:?} given twice")));
                }
            }
        }
        Ok(Step {
            line,
            actor,
            op,
            args,
            expect,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Value {
    Instance(InstanceId),
    Request(RequestId),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReport {
    pub line: usize,
    pub actor: String,
    pub op: Op,
    pub outcome: String,
}

impl fmt::Display for StepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {:>3} {} {}: {}", self.line, self.actor, self.op.as_str(), self.outcome)
    }
}

pub struct RunOutcome {
    pub steps: Vec<StepReport>,
    pub ledger: LedgerHandle,
    pub bindings: BTreeMap<String, String>,
}

impl RunOutcome {
    pub fn chain(&self) -> Vec<Block> {
        self.ledger.lock().expect("ledger lock").chain().to_vec()
    }

    pub fn state_root(&self) -> Hash32 {
        self.ledger.lock().expect("ledger lock").state_root()
    }

    /// Instance id bound to `name` by an `as=` argument.
    pub fn instance(&self, name: &str) -> Option<InstanceId> {
        self.bindings.get(name).and_then(|s| InstanceId::from_hex(s))
    }
}

/// Observed result of a step, compared against its `expect` clause.
#[derive(Debug, Default)]
struct Observed {
    fields: BTreeMap<String, String>,
    summary: String,
}

impl Observed {
    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.insert(key.to_string(), value.to_string());
        self
    }
}

struct Runner {
    scenario_seed: u64,
    sizes: SizeProfile,
    data_rng: ChaCha20Rng,
    actors: BTreeMap<String, StakeholderContext>,
    vars: BTreeMap<String, Value>,
}

fn step_err(step: &Step, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Step {
        line: step.line,
        message: message.into(),
    }
}

fn filler(rng: &mut ChaCha20Rng, prefix: &[u8], len: usize) -> Vec<u8> {
    let mut out = prefix.to_vec();
    while out.len() < len {
        out.push(b'a' + (rng.next_u32() % 26) as u8);
    }
    out
}

impl Runner {
    fn arg<'s>(&self, step: &'s Step, key: &str) -> Result<&'s str, ScenarioError> {
        step.args
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| step_err(step, format!("missing argument {key}")))
    }

    fn instance(&self, step: &Step, key: &str) -> Result<InstanceId, ScenarioError> {
        let name = self.arg(step, key)?;
        match self.vars.get(name) {
            Some(Value::Instance(id)) => Ok(*id),
            _ => Err(step_err(step, format!("{name:?} is not a bound instance"))),
        }
    }

    fn request(&self, step: &Step, name: &str) -> Result<RequestId, ScenarioError> {
        match self.vars.get(name) {
            Some(Value::Request(id)) => Ok(*id),
            _ => Err(step_err(step, format!("{name:?} is not a bound request"))),
        }
    }

    fn text(&self, step: &Step, key: &str) -> Result<Option<Vec<u8>>, ScenarioError> {
        let Some(raw) = step.args.get(key) else {
            return Ok(None);
        };
        if let Some(name) = raw.strip_prefix('$') {
            return match self.vars.get(name) {
                Some(Value::Bytes(b)) => Ok(Some(b.clone())),
                _ => Err(step_err(step, format!("{name:?} is not a bound plaintext"))),
            };
        }
        Ok(Some(raw.as_bytes().to_vec()))
    }

    fn number(&self, step: &Step, key: &str) -> Result<u64, ScenarioError> {
        self.arg(step, key)?
            .parse()
            .map_err(|_| step_err(step, format!("{key} must be an integer")))
    }

    fn actor_address(&self, step: &Step, key: &str) -> Result<crate::ledger::Address, ScenarioError> {
        let name = self.arg(step, key)?;
        self.actors
            .get(name)
            .map(StakeholderContext::address)
            .ok_or_else(|| step_err(step, format!("unknown actor {name:?}")))
    }

    fn item(&self, step: &Step) -> Result<Item, ScenarioError> {
        self.arg(step, "item")?.parse().map_err(|e: String| step_err(step, e))
    }

    fn bind(&mut self, step: &Step, value: Value) {
        if let Some(name) = step.args.get("as") {
            self.vars.insert(name.clone(), value);
        }
    }

    fn item_data(&mut self, item: Item, prefix: &[u8]) -> Vec<u8> {
        let kb = self.sizes.ranges().sample_kb(item, &mut self.data_rng);
        let len = kb_to_bytes(kb).max(prefix.len());
        filler(&mut self.data_rng, prefix, len)
    }

    fn execute(&mut self, step: &Step) -> Result<Result<Observed, WorkflowError>, ScenarioError> {
        let mut actor = self
            .actors
            .remove(&step.actor)
            .expect("actors are validated at parse time");
        let result = self.execute_as(step, &mut actor);
        self.actors.insert(step.actor.clone(), actor);
        result
    }

    fn execute_as(
        &mut self,
        step: &Step,
        actor: &mut StakeholderContext,
    ) -> Result<Result<Observed, WorkflowError>, ScenarioError> {
        let observed = match step.op {
            Op::OpenConsent => actor.patient_open_consent().map(|id| {
                self.bind(step, Value::Instance(id));
                Observed { summary: format!("consent {id}"), ..Default::default() }
            }),
            Op::Open => {
                let kind = parse_kind(self.arg(step, "kind")?).ok_or_else(|| step_err(step, "unknown contract kind"))?;
                let recipient = self.actor_address(step, "recipient")?;
                let mint = if step.args.contains_key("mint") { self.number(step, "mint")? } else { 0 };
                actor.open(kind, recipient, mint).map(|id| {
                    self.bind(step, Value::Instance(id));
                    Observed { summary: format!("{kind} {id}"), ..Default::default() }
                })
            }
            Op::Prescribe => {
                let patient_name = self.arg(step, "patient")?;
                let patient = self
                    .actors
                    .get(patient_name)
                    .ok_or_else(|| step_err(step, format!("unknown actor {patient_name:?}")))?
                    .public_key();
                let pi = match self.text(step, "pi")? {
                    Some(t) => t,
                    None => self.item_data(Item::Pi, format!("patient:{patient_name};").as_bytes()),
                };
                let med = match self.text(step, "med")? {
                    Some(t) => t,
                    None => self.item_data(Item::Med, b"amoxicillin;500mg;12\n"),
                };
                let dia = match self.text(step, "dia")? {
                    Some(t) => t,
                    None => self.item_data(Item::Dia, b"diagnosis:"),
                };
                actor.doctor_create_prescription(&patient, &pi, &med, &dia).map(|id| {
                    self.bind(step, Value::Instance(id));
                    Observed { summary: format!("prescription {id}"), ..Default::default() }
                })
            }
            Op::Request => {
                let consent = self.instance(step, "consent")?;
                let items: ItemSet = self.arg(step, "items")?.parse().map_err(|e: String| step_err(step, e))?;
                actor.consumer_request_access(consent, items).map(|id| {
                    self.bind(step, Value::Request(id));
                    Observed { summary: format!("request {id} for {items}"), ..Default::default() }
                })
            }
            Op::Approve => {
                let consent = self.instance(step, "consent")?;
                let names: Vec<&str> = self.arg(step, "requests")?.split(',').collect();
                let mut ids = BTreeMap::new();
                for name in &names {
                    ids.insert(self.request(step, name)?, *name);
                }
                let approve: BTreeSet<RequestId> = ids.keys().copied().collect();
                actor.patient_handle_requests(consent, &approve).map(|decisions| {
                    let mut obs = Observed::default();
                    let mut parts = Vec::new();
                    for d in &decisions {
                        let shown = match d.decision {
                            Decision::Granted => d.granted.to_string(),
                            Decision::Denied => "denied".to_string(),
                        };
                        parts.push(format!("{}={shown}", ids[&d.request_id]));
                        obs = obs.with(ids[&d.request_id], &shown);
                        if decisions.len() == 1 {
                            obs = obs.with("granted", &shown);
                        }
                    }
                    obs.summary = parts.join(" ");
                    obs
                })
            }
            Op::Access => {
                let consent = self.instance(step, "consent")?;
                let rx = self.instance(step, "rx")?;
                let request = self.request(step, self.arg(step, "request")?)?;
                let item = self.item(step)?;
                let purpose = step.args.get("purpose").map_or("read", String::as_str);
                actor
                    .consumer_complete_access(consent, rx, request, item, purpose)
                    .map(|pt| {
                        let shown = String::from_utf8_lossy(&pt).into_owned();
                        let len = pt.len();
                        self.bind(step, Value::Bytes(pt));
                        Observed {
                            summary: format!("{} bytes of {}", len, item.as_str()),
                            ..Default::default()
                        }
                        .with("plaintext", shown)
                        .with("bytes", len)
                    })
            }
            Op::Supply => {
                let control = self.instance(step, "control")?;
                let amount = self.number(step, "amount")?;
                actor.regulator_supply(control, amount).map(|()| Observed {
                    summary: format!("supplied {amount}"),
                    ..Default::default()
                })
            }
            Op::Dispense => {
                let sales = self.instance(step, "sales")?;
                let control = self.instance(step, "control")?;
                let rx = self.instance(step, "rx")?;
                let med = self.text(step, "med")?.ok_or_else(|| step_err(step, "missing argument med"))?;
                actor.pharmacy_dispense(sales, control, rx, &med).map(|m| Observed {
                    summary: format!("sold {}", m.to_line()),
                    ..Default::default()
                })
            }
            Op::Sell => {
                let sales = self.instance(step, "sales")?;
                let rx = self.instance(step, "rx")?;
                let call = Call::SellMedication {
                    medication_name: self.arg(step, "name")?.to_string(),
                    dosage: self.arg(step, "dosage")?.to_string(),
                    price: self.number(step, "price")?,
                    prescription_ref: rx,
                };
                actor.call(sales, call).map(|()| Observed { summary: "sale recorded".into(), ..Default::default() })
            }
            Op::UpdateSold => {
                let control = self.instance(step, "control")?;
                let amount = self.number(step, "amount")?;
                actor
                    .call(control, Call::UpdateMedicationsSold { amount })
                    .map(|()| Observed { summary: format!("sold +{amount}"), ..Default::default() })
            }
            Op::RecordAccess => {
                let rx = self.instance(step, "rx")?;
                let item = self.item(step)?;
                let purpose = step.args.get("purpose").cloned().unwrap_or_else(|| "read".into());
                actor
                    .call(rx, Call::RecordAccess { item, purpose })
                    .map(|()| Observed { summary: "access logged".into(), ..Default::default() })
            }
            Op::VerifyCompliance => {
                let control = self.instance(step, "control")?;
                let sales = self.instance(step, "sales")?;
                actor.regulator_verify_compliance(control, sales).map(|r| {
                    Observed {
                        summary: format!(
                            "supplied={} sold={} sales={} consistent={}",
                            r.supplied, r.sold, r.sales_count, r.consistent
                        ),
                        ..Default::default()
                    }
                    .with("supplied", r.supplied)
                    .with("sold", r.sold)
                    .with("sales", r.sales_count)
                    .with("consistent", r.consistent)
                })
            }
            Op::Report => {
                let report = self.instance(step, "report")?;
                let description = self.arg(step, "description")?.to_string();
                actor
                    .call(report, Call::CreateReport { description })
                    .map(|()| Observed { summary: "report filed".into(), ..Default::default() })
            }
            Op::Reward => {
                let reward = self.instance(step, "reward")?;
                let to = self.actor_address(step, "to")?;
                let amount = self.number(step, "amount")?;
                actor
                    .call(reward, Call::SendReward { to, amount })
                    .map(|()| Observed { summary: format!("rewarded {amount}"), ..Default::default() })
            }
            Op::ReportAndReward => {
                let report = self.instance(step, "report")?;
                let reward = self.instance(step, "reward")?;
                let description = self.arg(step, "description")?;
                let amount = self.number(step, "amount")?;
                let regulator_name = self.arg(step, "regulator")?;
                let mut regulator = self
                    .actors
                    .remove(regulator_name)
                    .ok_or_else(|| step_err(step, format!("unknown actor {regulator_name:?}")))?;
                let result = StakeholderContext::patient_report_and_reward(
                    actor,
                    &mut regulator,
                    report,
                    reward,
                    description,
                    amount,
                );
                self.actors.insert(regulator_name.to_string(), regulator);
                result.map(|balance| {
                    Observed { summary: format!("balance {balance}"), ..Default::default() }.with("balance", balance)
                })
            }
        };
        Ok(observed)
    }

    fn check(&self, step: &Step, result: Result<Observed, WorkflowError>) -> Result<String, ScenarioError> {
        let mismatch = |expected: String, actual: String| ScenarioError::Assertion {
            line: step.line,
            expected,
            actual,
        };
        match (result, step.expect.get("error")) {
            (Err(e), Some(want)) if e.name() == want => Ok(format!("error {} (expected)", e.name())),
            (Err(e), Some(want)) => Err(mismatch(format!("error {want}"), format!("error {}", e.name()))),
            (Err(e), None) => Err(mismatch("success".into(), format!("error {}: {e}", e.name()))),
            (Ok(obs), Some(want)) => Err(mismatch(format!("error {want}"), format!("success ({})", obs.summary))),
            (Ok(obs), None) => {
                for (key, want) in &step.expect {
                    let got = obs
                        .fields
                        .get(key)
                        .ok_or_else(|| step_err(step, format!("{} has no observable {key:?}", step.op.as_str())))?;
                    if got != want {
                        return Err(mismatch(format!("{key}={want}"), format!("{key}={got}")));
                    }
                }
                Ok(obs.summary)
            }
        }
    }
}

fn parse_kind(s: &str) -> Option<ContractKind> {
    ContractKind::ALL.into_iter().find(|k| k.as_str() == s)
}

/// Derives the actor's key seed from the scenario seed and the actor name.
pub fn actor_seed(scenario_seed: u64, name: &str) -> [u8; 32] {
    derive_seed(&[b"scenario", &scenario_seed.to_be_bytes(), b"actor", name.as_bytes()])
}

impl Scenario {
    /// Runs every step, stopping at the first failed expectation.
    pub fn run(&self) -> Result<RunOutcome, ScenarioError> {
        self.run_with(|_| {})
    }

    pub fn run_with(&self, mut on_step: impl FnMut(&StepReport)) -> Result<RunOutcome, ScenarioError> {
        let ledger = shared(Ledger::new(self.config, vec![]).expect("empty genesis"));
        let mut runner = Runner {
            scenario_seed: self.seed,
            sizes: self.sizes,
            data_rng: ChaCha20Rng::from_seed(derive_seed(&[b"scenario", &self.seed.to_be_bytes(), b"data"])),
            actors: BTreeMap::new(),
            vars: BTreeMap::new(),
        };
        for (name, role) in &self.actors {
            let ctx = StakeholderContext::from_seed(*role, actor_seed(runner.scenario_seed, name), ledger.clone())
                .map_err(|e| ScenarioError::Step {
                    line: 0,
                    message: format!("registering {name}: {e}"),
                })?;
            runner.actors.insert(name.clone(), ctx);
        }
        if !self.actors.is_empty() {
            ledger.lock().expect("ledger lock").produce_next_block();
        }

        let mut steps = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            let result = runner.execute(step)?;
            let outcome = runner.check(step, result)?;
            let report = StepReport {
                line: step.line,
                actor: step.actor.clone(),
                op: step.op,
                outcome,
            };
            on_step(&report);
            steps.push(report);
        }
        let bindings = runner
            .vars
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Instance(id) => Some((k.clone(), id.to_string())),
                Value::Request(id) => Some((k.clone(), id.to_string())),
                Value::Bytes(_) => None,
            })
            .collect();
        Ok(RunOutcome {
            steps,
            ledger,
            bindings,
        })
    }
}
