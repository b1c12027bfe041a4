//! Scenario runner.
//!
//! A scenario file names the accounts, data sources, miners and one protocol
//! instance, then scripts actor steps at given ticks. Each tick runs the
//! scripted steps, lets the protocol react (oracle polls and the like),
//! mines one host block and, for Truthcoin, one side block. Everything that
//! happens is appended to an [`EventLog`]; identical scenario and seed give
//! byte-identical logs.

mod counterparty;
mod log;
mod oraclize;
mod orisi;
mod realitykeys;
mod truthcoin;
mod will;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::datafeed::{DataSource, EpochSeconds, FeedSet, FixtureEntry};
use crate::simchain::{
    keygen, mine_next, sim_rng, Amount, Chain, Digest, KeyPair, Mempool, MempoolConfig, MinerTable,
    PolicyEra, PubKey, Rejection, SimRng, StandardnessPolicy, Transaction,
};

pub use log::{export_metrics, verify_replay, Event, EventLog};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario invalid: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub era: PolicyEra,
    pub miners: MinerTable,
    #[serde(default)]
    pub mempool_expiry: Option<u64>,
    pub start_time: EpochSeconds,
    pub tick_seconds: EpochSeconds,
    pub ticks: u64,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    pub accounts: Vec<AccountSpec>,
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub id: String,
    #[serde(default = "yes")]
    pub ssl: bool,
    #[serde(default)]
    pub entries: Vec<FixtureEntry>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub name: String,
    /// Genesis host balance in satoshi.
    #[serde(default)]
    pub balance: Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProtocolSpec {
    Will(will::WillSpec),
    Realitykeys(realitykeys::RkSpec),
    Orisi(orisi::OrisiSpec),
    Truthcoin(truthcoin::TcSpec),
    Counterparty(counterparty::CpSpec),
    Oraclize(oraclize::OzSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub tick: u64,
    pub actor: String,
    #[serde(rename = "do")]
    pub step: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    /// Confirmed host balance of an account, satoshi.
    Balance {
        account: String,
        #[serde(default)]
        eq: Option<Amount>,
        #[serde(default)]
        min: Option<Amount>,
        #[serde(default)]
        max: Option<Amount>,
    },
    Confirmed {
        label: String,
    },
    NotConfirmed {
        label: String,
    },
    /// The labelled transaction was refused by the mempool.
    Rejected {
        label: String,
    },
    Event {
        kind: String,
        #[serde(default)]
        min_count: Option<usize>,
        #[serde(default)]
        count: Option<usize>,
    },
    NoEvent {
        kind: String,
    },
    /// Compares a JSON pointer into the protocol's final state.
    State {
        pointer: String,
        eq: Value,
    },
}

/// Shared simulation state handed to protocol drivers.
pub(crate) struct Ctx {
    pub tick: u64,
    pub now: EpochSeconds,
    pub chain: Chain,
    pub mempool: Mempool,
    pub miners: MinerTable,
    pub rng: SimRng,
    pub feeds: FeedSet,
    pub accounts: BTreeMap<String, KeyPair>,
    pub labels: BTreeMap<String, Digest>,
    pub rejected: BTreeMap<String, String>,
    pub log: EventLog,
}

pub(crate) type StepResult = Result<(), String>;

impl Ctx {
    pub fn key(&self, name: &str) -> Result<&KeyPair, String> {
        self.accounts
            .get(name)
            .ok_or_else(|| format!("unknown account {name:?}"))
    }

    pub fn pubkey(&self, name: &str) -> Result<PubKey, String> {
        Ok(self.key(name)?.public)
    }

    pub fn emit(&mut self, module: &str, kind: &str, payload: Value) {
        self.log.push(Event {
            tick: self.tick,
            module: module.to_string(),
            kind: kind.to_string(),
            payload,
        });
    }

    /// Sends a transaction to the mempool under `label`. Returns whether it
    /// was accepted.
    pub fn submit(&mut self, module: &str, label: &str, tx: Transaction) -> bool {
        let txid = tx.txid();
        match self.mempool.submit(&self.chain, tx) {
            Ok(_) => {
                self.labels.insert(label.to_string(), txid);
                let standard = self
                    .mempool
                    .get(&txid)
                    .map(|e| e.standardness.is_standard())
                    .unwrap_or(true);
                self.emit(
                    module,
                    "tx_submitted",
                    json!({"label": label, "txid": txid, "standard": standard}),
                );
                true
            }
            Err(r) => {
                let reason = match r {
                    Rejection::Invalid(e) => format!("{e:?}"),
                    other => format!("{other:?}"),
                };
                self.rejected.insert(label.to_string(), reason.clone());
                self.emit(
                    module,
                    "tx_rejected",
                    json!({"label": label, "txid": txid, "reason": reason}),
                );
                false
            }
        }
    }

    pub fn is_confirmed(&self, label: &str) -> bool {
        self.labels
            .get(label)
            .is_some_and(|t| self.chain.confirmation_height(t).is_some())
    }

    pub fn label_of(&self, txid: &Digest) -> Option<&str> {
        self.labels
            .iter()
            .find(|(_, t)| *t == txid)
            .map(|(l, _)| l.as_str())
    }
}

/// A protocol instance inside the harness.
pub(crate) trait Driver {
    fn module(&self) -> &'static str;
    fn step(&mut self, ctx: &mut Ctx, actor: &str, step: &Value) -> StepResult;
    /// Runs after the scripted steps of a tick, before the block is mined.
    fn on_tick(&mut self, _ctx: &mut Ctx) -> StepResult {
        Ok(())
    }
    /// Runs after the tick's host block is appended.
    fn after_block(&mut self, _ctx: &mut Ctx) {}
    fn final_state(&self, ctx: &Ctx) -> Value;
}

pub(crate) fn parse_step<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("bad step {v}: {e}"))
}

/// Account key derivation used by every scenario.
pub fn account_key(name: &str) -> KeyPair {
    keygen(format!("account/{name}").as_bytes()).expect("nonempty")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub log: EventLog,
    pub final_state: Value,
    pub failures: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn digest(&self) -> Digest {
        self.log.digest()
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
}

fn build_driver(spec: &ProtocolSpec) -> Box<dyn Driver> {
    match spec {
        ProtocolSpec::Will(s) => Box::new(will::WillDriver::new(s.clone())),
        ProtocolSpec::Realitykeys(s) => Box::new(realitykeys::RkDriver::new(s.clone())),
        ProtocolSpec::Orisi(s) => Box::new(orisi::OrisiDriver::new(s.clone())),
        ProtocolSpec::Truthcoin(s) => Box::new(truthcoin::TcDriver::new(s.clone())),
        ProtocolSpec::Counterparty(s) => Box::new(counterparty::CpDriver::new(s.clone())),
        ProtocolSpec::Oraclize(s) => Box::new(oraclize::OzDriver::new(s.clone())),
    }
}

fn validate(s: &Scenario) -> Result<(), HarnessError> {
    if s.tick_seconds <= 0 {
        return Err(HarnessError::Invalid(
            "tick_seconds must be positive".into(),
        ));
    }
    let mut names = std::collections::BTreeSet::new();
    for a in &s.accounts {
        if !names.insert(a.name.as_str()) {
            return Err(HarnessError::Invalid(format!(
                "duplicate account {:?}",
                a.name
            )));
        }
    }
    for a in &s.actions {
        if a.tick >= s.ticks {
            return Err(HarnessError::Invalid(format!(
                "action at tick {} is past the last tick {}",
                a.tick,
                s.ticks.saturating_sub(1)
            )));
        }
    }
    Ok(())
}

/// Runs a scenario to completion. `seed` overrides the file's seed.
pub fn run_scenario(s: &Scenario, seed: Option<u64>) -> Result<RunReport, HarnessError> {
    validate(s)?;
    let seed = seed.unwrap_or(s.seed);
    let accounts: BTreeMap<String, KeyPair> = s
        .accounts
        .iter()
        .map(|a| (a.name.clone(), account_key(&a.name)))
        .collect();
    let alloc: Vec<(PubKey, Amount)> = s
        .accounts
        .iter()
        .filter(|a| a.balance > 0)
        .map(|a| (accounts[&a.name].public, a.balance))
        .collect();
    let mut chain = Chain::genesis(&alloc);
    for k in accounts.values() {
        chain.register_key(k);
    }
    let mut feeds = FeedSet::new();
    for src in &s.sources {
        let mut d = DataSource::new(src.id.clone(), src.ssl);
        d.extend(src.entries.iter().cloned());
        feeds.add(d);
    }
    let mempool_cfg = MempoolConfig {
        expiry_blocks: s
            .mempool_expiry
            .unwrap_or(MempoolConfig::default().expiry_blocks),
    };
    let mut ctx = Ctx {
        tick: 0,
        now: s.start_time,
        chain,
        mempool: Mempool::new(StandardnessPolicy::for_era(s.era), mempool_cfg),
        miners: s.miners.clone(),
        rng: sim_rng(seed),
        feeds,
        accounts,
        labels: BTreeMap::new(),
        rejected: BTreeMap::new(),
        log: EventLog::default(),
    };
    let mut driver = build_driver(&s.protocol);
    let module = driver.module();
    ctx.emit(
        "harness",
        "run_start",
        json!({
            "scenario": s.name,
            "seed": seed,
            "era": s.era,
            "genesis": ctx.chain.tip_hash(),
            "accounts": ctx.accounts.iter().map(|(n, k)| (n.clone(), json!(k.public))).collect::<BTreeMap<_, _>>(),
        }),
    );

    let mut actions: Vec<&Action> = s.actions.iter().collect();
    actions.sort_by_key(|a| a.tick);
    let mut next = 0;
    for tick in 0..s.ticks {
        ctx.tick = tick;
        ctx.now = s.start_time + tick as EpochSeconds * s.tick_seconds;
        while next < actions.len() && actions[next].tick == tick {
            let a = actions[next];
            next += 1;
            ctx.emit(module, "step", json!({"actor": a.actor, "do": a.step}));
            if let Err(e) = driver.step(&mut ctx, &a.actor, &a.step) {
                ctx.emit(module, "step_failed", json!({"actor": a.actor, "error": e}));
            }
        }
        if let Err(e) = driver.on_tick(&mut ctx) {
            ctx.emit(module, "poll_failed", json!({"error": e}));
        }
        mine(&mut ctx);
        driver.after_block(&mut ctx);
    }

    let final_state = json!({
        "protocol": driver.final_state(&ctx),
        "balances": balances(&ctx),
        "height": ctx.chain.tip_height(),
    });
    let failures = check_assertions(&s.assertions, &ctx, &final_state);
    ctx.emit(
        "harness",
        "run_end",
        json!({"height": ctx.chain.tip_height(), "failures": failures, "final_state": final_state}),
    );
    Ok(RunReport {
        scenario: s.name.clone(),
        seed,
        log: ctx.log,
        final_state,
        failures,
    })
}

fn balances(ctx: &Ctx) -> BTreeMap<String, Amount> {
    ctx.accounts
        .iter()
        .map(|(n, k)| (n.clone(), ctx.chain.balance_of(&k.public)))
        .collect()
}

fn mine(ctx: &mut Ctx) {
    let out = mine_next(&mut ctx.chain, &mut ctx.mempool, &ctx.miners, &mut ctx.rng)
        .expect("miner table validated at parse time");
    let included: Vec<Value> = out
        .included
        .iter()
        .map(|i| {
            json!({
                "txid": i.txid,
                "label": ctx.label_of(&i.txid),
                "delay": i.delay,
                "standard": i.standard,
            })
        })
        .collect();
    let expired: Vec<Value> = out
        .expired
        .iter()
        .map(|t| json!({"txid": t, "label": ctx.label_of(t)}))
        .collect();
    let payload = json!({
        "height": out.height,
        "miner": out.miner_id,
        "hash": ctx.chain.tip_hash(),
        "included": included,
        "expired": expired,
        "balances": balances(ctx),
    });
    ctx.emit("simchain", "block", payload);
}

fn check_assertions(list: &[Assertion], ctx: &Ctx, state: &Value) -> Vec<String> {
    let mut failures = vec![];
    let count = |kind: &str| ctx.log.records().iter().filter(|e| e.kind == kind).count();
    for (i, a) in list.iter().enumerate() {
        let fail = match a {
            Assertion::Balance {
                account,
                eq,
                min,
                max,
            } => match ctx.key(account) {
                Err(e) => Some(e),
                Ok(k) => {
                    let b = ctx.chain.balance_of(&k.public);
                    if eq.is_some_and(|x| b != x)
                        || min.is_some_and(|x| b < x)
                        || max.is_some_and(|x| b > x)
                    {
                        Some(format!("balance of {account} is {b}"))
                    } else {
                        None
                    }
                }
            },
            Assertion::Confirmed { label } => {
                (!ctx.is_confirmed(label)).then(|| format!("{label} not confirmed"))
            }
            Assertion::NotConfirmed { label } => ctx
                .is_confirmed(label)
                .then(|| format!("{label} confirmed")),
            Assertion::Rejected { label } => {
                (!ctx.rejected.contains_key(label)).then(|| format!("{label} not rejected"))
            }
            Assertion::Event {
                kind,
                min_count,
                count: exact,
            } => {
                let n = count(kind);
                let bad = match (exact, min_count) {
                    (Some(c), _) => n != *c,
                    (None, Some(m)) => n < *m,
                    (None, None) => n == 0,
                };
                bad.then(|| format!("event {kind} seen {n} times"))
            }
            Assertion::NoEvent { kind } => {
                let n = count(kind);
                (n > 0).then(|| format!("event {kind} seen {n} times"))
            }
            Assertion::State { pointer, eq } => match state.pointer(pointer) {
                Some(v) if v == eq => None,
                Some(v) => Some(format!("{pointer} is {v}, expected {eq}")),
                None => Some(format!("{pointer} missing from final state")),
            },
        };
        if let Some(f) = fail {
            failures.push(format!("assertion {i}: {f}"));
        }
    }
    failures
}
