use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_step, Ctx, Driver, StepResult};
use crate::datafeed::EpochSeconds;
use crate::simchain::wallet::build_payment;
use crate::simchain::{keygen, KeyPair, TxOut};
use crate::truthcoin::{
    vote_commitment, BallotId, BallotPhase, DecisionId, DecisionKind, DecisionState, MarketId,
    Truthcoin, TruthcoinConfig, TruthcoinError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcSpec {
    #[serde(default)]
    pub config: TruthcoinConfig,
    /// Initial VTC per address, base units.
    pub vtc: BTreeMap<String, u64>,
    /// CSH already on the side chain at start, base units.
    #[serde(default)]
    pub csh: BTreeMap<String, u64>,
    /// Host miners whose side blocks veto every resolved ballot.
    #[serde(default)]
    pub veto_miners: Vec<String>,
    /// Host sat per CSH unit moved across the peg.
    #[serde(default = "one")]
    pub peg_fee: u64,
}

fn one() -> u64 {
    1_000
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Step {
    AddDecision {
        name: String,
        prompt: String,
        kind: DecisionKind,
        maturity: EpochSeconds,
    },
    AddMarket {
        name: String,
        decisions: Vec<String>,
        b: f64,
        fee_rate: f64,
    },
    Trade {
        market: String,
        state: usize,
        /// Share base units; negative sells.
        units: i64,
    },
    /// Commits to reports keyed by decision name. The salt is kept for the
    /// reveal.
    Commit {
        reports: BTreeMap<String, f64>,
        stake: u64,
        salt: String,
    },
    Reveal {
        /// Reveal these reports instead of the committed ones.
        #[serde(default)]
        tamper: Option<BTreeMap<String, f64>>,
    },
    Redeem {
        market: String,
    },
    PegIn {
        units: u64,
    },
    PegOut {
        units: u64,
    },
}

struct Pending {
    ballot: BallotId,
    reports: BTreeMap<DecisionId, f64>,
    salt: Vec<u8>,
}

pub struct TcDriver {
    spec: TcSpec,
    tc: Truthcoin,
    peg: KeyPair,
    decisions: BTreeMap<String, DecisionId>,
    markets: BTreeMap<String, MarketId>,
    pending: BTreeMap<String, Pending>,
    peg_ins: Vec<(String, String, u64)>,
    peg_seq: u64,
}

impl TcDriver {
    pub fn new(spec: TcSpec) -> Self {
        let alloc: Vec<(String, u64)> = spec.vtc.iter().map(|(a, v)| (a.clone(), *v)).collect();
        let mut tc = Truthcoin::new(spec.config.clone(), &alloc);
        for (a, v) in &spec.csh {
            tc.ledger.peg_in(a, *v);
        }
        TcDriver {
            spec,
            tc,
            peg: keygen(b"truthcoin/peg").expect("nonempty"),
            decisions: BTreeMap::new(),
            markets: BTreeMap::new(),
            pending: BTreeMap::new(),
            peg_ins: vec![],
            peg_seq: 0,
        }
    }

    fn decision(&self, name: &str) -> Result<DecisionId, String> {
        self.decisions
            .get(name)
            .copied()
            .ok_or_else(|| format!("unknown decision {name:?}"))
    }

    fn market(&self, name: &str) -> Result<MarketId, String> {
        self.markets
            .get(name)
            .copied()
            .ok_or_else(|| format!("unknown market {name:?}"))
    }

    fn by_id(&self, r: &BTreeMap<String, f64>) -> Result<BTreeMap<DecisionId, f64>, String> {
        r.iter().map(|(n, v)| Ok((self.decision(n)?, *v))).collect()
    }

    fn vtc_map(&self) -> BTreeMap<String, u64> {
        self.spec
            .vtc
            .keys()
            .map(|a| {
                (
                    a.clone(),
                    self.tc.ledger.vtc(a) + self.tc.ledger.frozen_vtc(a),
                )
            })
            .collect()
    }

    fn name_of(&self, id: DecisionId) -> String {
        self.decisions
            .iter()
            .find(|(_, d)| **d == id)
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| id.to_string())
    }
}

fn err(e: TruthcoinError) -> String {
    e.to_string()
}

impl Driver for TcDriver {
    fn module(&self) -> &'static str {
        "truthcoin"
    }

    fn step(&mut self, ctx: &mut Ctx, actor: &str, step: &Value) -> StepResult {
        let m = self.module();
        match parse_step::<Step>(step)? {
            Step::AddDecision {
                name,
                prompt,
                kind,
                maturity,
            } => {
                let id = self
                    .tc
                    .add_decision(actor, prompt, kind, maturity, ctx.now)
                    .map_err(err)?;
                ctx.emit(m, "decision_added", json!({"name": name, "id": id}));
                self.decisions.insert(name, id);
            }
            Step::AddMarket {
                name,
                decisions,
                b,
                fee_rate,
            } => {
                let ids: Vec<DecisionId> = decisions
                    .iter()
                    .map(|d| self.decision(d))
                    .collect::<Result<_, _>>()?;
                let id = self.tc.add_market(actor, &ids, b, fee_rate).map_err(err)?;
                ctx.emit(m, "market_added", json!({"name": name, "id": id}));
                self.markets.insert(name, id);
            }
            Step::Trade {
                market,
                state,
                units,
            } => {
                let id = self.market(&market)?;
                let r = self.tc.trade(id, actor, state, units).map_err(err)?;
                let prices = self.tc.market(id).map_err(err)?.prices();
                ctx.emit(
                    m,
                    "trade",
                    json!({"market": market, "state": state, "units": units, "charge": r.charge, "fee": r.fee, "prices": prices}),
                );
            }
            Step::Commit {
                reports,
                stake,
                salt,
            } => {
                let reports = self.by_id(&reports)?;
                let first = *reports.keys().next().ok_or("empty report")?;
                let ballot = match self.tc.decision(first).map_err(err)?.state {
                    DecisionState::Mature { ballot } | DecisionState::Revote { ballot } => ballot,
                    _ => return Err("decision is not on a voting ballot".into()),
                };
                let round = self.tc.ballot(ballot).map_err(err)?.round;
                let salt = salt.into_bytes();
                let c = vote_commitment(ballot, round, &reports, &salt);
                self.tc
                    .commit_vote(actor, ballot, c, stake, ctx.now)
                    .map_err(err)?;
                ctx.emit(m, "vote_committed", json!({"voter": actor, "ballot": ballot, "round": round, "stake": stake, "commitment": c}));
                self.pending.insert(
                    actor.to_string(),
                    Pending {
                        ballot,
                        reports,
                        salt,
                    },
                );
            }
            Step::Reveal { tamper } => {
                let p = self.pending.get(actor).ok_or("nothing committed")?;
                let reports = match &tamper {
                    Some(t) => self.by_id(t)?,
                    None => p.reports.clone(),
                };
                let (ballot, salt) = (p.ballot, p.salt.clone());
                self.tc
                    .reveal_vote(actor, ballot, reports, &salt, ctx.now)
                    .map_err(err)?;
                ctx.emit(
                    m,
                    "vote_revealed",
                    json!({"voter": actor, "ballot": ballot}),
                );
            }
            Step::Redeem { market } => {
                let paid = self.tc.redeem(self.market(&market)?, actor).map_err(err)?;
                ctx.emit(
                    m,
                    "redeemed",
                    json!({"holder": actor, "market": market, "paid": paid}),
                );
            }
            Step::PegIn { units } => {
                let payer = *ctx.key(actor)?;
                let tx = build_payment(
                    ctx.chain.utxo(),
                    &payer,
                    vec![TxOut::to_key(units, self.peg.public)],
                    self.spec.peg_fee,
                    &ctx.mempool.reserved(),
                )
                .map_err(|e| e.to_string())?;
                self.peg_seq += 1;
                let label = format!("peg_in_{}", self.peg_seq);
                if ctx.submit(m, &label, tx) {
                    self.peg_ins.push((label, actor.to_string(), units));
                }
            }
            Step::PegOut { units } => {
                ctx.chain.register_key(&self.peg);
                let dest = ctx.pubkey(actor)?;
                let tx = build_payment(
                    ctx.chain.utxo(),
                    &self.peg,
                    vec![TxOut::to_key(units - self.spec.peg_fee.min(units), dest)],
                    self.spec.peg_fee.min(units),
                    &ctx.mempool.reserved(),
                )
                .map_err(|e| e.to_string())?;
                self.tc.ledger.peg_out(actor, units).map_err(err)?;
                self.peg_seq += 1;
                ctx.submit(m, &format!("peg_out_{}", self.peg_seq), tx);
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut Ctx) -> StepResult {
        let m = self.module();
        if let Some(b) = self.tc.mature_and_ballot(ctx.now) {
            let names: Vec<String> = self
                .tc
                .ballot(b)
                .map_err(err)?
                .decisions
                .iter()
                .map(|d| self.name_of(*d))
                .collect();
            ctx.emit(m, "ballot_opened", json!({"ballot": b, "decisions": names}));
        }
        let ballots: Vec<(BallotId, BallotPhase, EpochSeconds)> = self
            .tc
            .ballots()
            .map(|b| (b.id, b.phase, b.reveal_deadline))
            .collect();
        for (id, phase, reveal_deadline) in ballots {
            match phase {
                BallotPhase::Voting if ctx.now >= reveal_deadline => {
                    let r = self.tc.resolve_ballot(id, ctx.now).map_err(err)?.clone();
                    let outcomes: BTreeMap<String, _> = r
                        .outcomes
                        .iter()
                        .map(|(d, o)| (self.name_of(*d), *o))
                        .collect();
                    ctx.emit(
                        m,
                        "ballot_resolved",
                        json!({"ballot": id, "round": r.round, "outcomes": outcomes, "slashed": r.total_slashed, "vtc": self.vtc_map()}),
                    );
                }
                BallotPhase::Resolved => match self
                    .tc
                    .veto_tally(id)
                    .and_then(|t| self.tc.close_veto_window(id, ctx.now).map(|v| (v, t.0)))
                {
                    Ok((v, vetoes)) => {
                        ctx.emit(
                            m,
                            "veto_window_closed",
                            json!({"ballot": id, "verdict": v, "vetoes": vetoes, "vtc": self.vtc_map()}),
                        );
                    }
                    Err(TruthcoinError::WindowOpen) => {}
                    Err(e) => return Err(err(e)),
                },
                _ => {}
            }
        }
        Ok(())
    }

    fn after_block(&mut self, ctx: &mut Ctx) {
        let miner = ctx
            .log
            .records()
            .iter()
            .rev()
            .find(|e| e.kind == "block")
            .and_then(|e| e.payload.get("miner").and_then(Value::as_str))
            .unwrap_or("")
            .to_string();
        let flags: Vec<BallotId> = if self.spec.veto_miners.contains(&miner) {
            self.tc
                .ballots()
                .filter(|b| b.phase == BallotPhase::Resolved)
                .map(|b| b.id)
                .collect()
        } else {
            vec![]
        };
        let h = self.tc.add_side_block(&miner, ctx.now, flags.clone());
        if !flags.is_empty() {
            ctx.emit(
                "truthcoin",
                "veto",
                json!({"side_height": h, "miner": miner, "ballots": flags}),
            );
        }
        let (done, waiting): (Vec<_>, Vec<_>) = std::mem::take(&mut self.peg_ins)
            .into_iter()
            .partition(|(l, _, _)| ctx.is_confirmed(l));
        self.peg_ins = waiting;
        for (label, who, units) in done {
            self.tc.ledger.peg_in(&who, units);
            ctx.emit(
                "truthcoin",
                "pegged_in",
                json!({"label": label, "address": who, "units": units}),
            );
        }
    }

    fn final_state(&self, _ctx: &Ctx) -> Value {
        let decisions: BTreeMap<String, Value> = self
            .decisions
            .iter()
            .map(|(n, id)| {
                (
                    n.clone(),
                    json!(self.tc.decision(*id).ok().map(|d| d.state)),
                )
            })
            .collect();
        let csh: BTreeMap<String, u64> = self
            .spec
            .vtc
            .keys()
            .chain(self.spec.csh.keys())
            .map(|a| (a.clone(), self.tc.ledger.csh(a)))
            .collect();
        json!({
            "decisions": decisions,
            "vtc": self.vtc_map(),
            "total_vtc": self.tc.ledger.total_vtc(),
            "csh": csh,
            "csh_in_circulation": self.tc.csh_in_circulation(),
            "side_height": self.tc.side_blocks().len(),
        })
    }
}
