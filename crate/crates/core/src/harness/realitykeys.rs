use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_step, Ctx, Driver, StepResult};
use crate::datafeed::EpochSeconds;
use crate::realitykeys::{
    demo_claim, demo_countersign, demo_makekeys, demo_refund, demo_setup, DemoContract, DemoTerms,
    FactId, Outcome, Registry, SourceRef,
};
use crate::simchain::wallet::build_payment;
use crate::simchain::{Amount, KeyPair, OutPoint, TxOut};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RkSpec {
    pub question: String,
    pub source_ref: SourceRef,
    pub resolution_time: EpochSeconds,
    /// Bets on "yes".
    pub alice: String,
    /// Bets on "no".
    pub bob: String,
    pub alice_stake: Amount,
    pub bob_stake: Amount,
    pub fee: Amount,
    /// Account that receives objection tips.
    pub operator: String,
    #[serde(default)]
    pub objection_window: Option<EpochSeconds>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Step {
    RegisterFact,
    /// The actor pays its stake to a fresh temporary address.
    FundTemp,
    /// Alice drafts the setup; Bob rebuilds it from his own terms.
    Setup {
        /// Bob's copy of the terms disagrees on his stake.
        #[serde(default)]
        bob_terms_differ: bool,
    },
    Refund,
    PostResult,
    Object {
        tip: Amount,
        verdict: Outcome,
    },
    Finalize,
    Claim,
}

pub struct RkDriver {
    spec: RkSpec,
    registry: Registry,
    fact: Option<FactId>,
    temps: BTreeMap<String, (KeyPair, OutPoint)>,
    contract: Option<DemoContract>,
}

impl RkDriver {
    pub fn new(spec: RkSpec) -> Self {
        let mut registry = Registry::new("harness");
        if let Some(w) = spec.objection_window {
            registry.objection_window = w;
        }
        RkDriver {
            spec,
            registry,
            fact: None,
            temps: BTreeMap::new(),
            contract: None,
        }
    }

    fn fact(&self) -> Result<FactId, String> {
        self.fact.ok_or_else(|| "no fact registered".to_string())
    }

    fn temp(&self, who: &str) -> Result<&(KeyPair, OutPoint), String> {
        self.temps
            .get(who)
            .ok_or_else(|| format!("{who} has no temporary address"))
    }

    fn terms(&self, bob_stake: Amount) -> Result<DemoTerms, String> {
        let f = self
            .registry
            .fact(self.fact()?)
            .map_err(|e| e.to_string())?;
        let (a, at) = self.temp(&self.spec.alice)?;
        let (b, bt) = self.temp(&self.spec.bob)?;
        Ok(DemoTerms {
            fact_id: f.id,
            yes_pub: f.yes_pub,
            no_pub: f.no_pub,
            alice_pub: a.public,
            bob_pub: b.public,
            alice_temp: *at,
            bob_temp: *bt,
            alice_stake: self.spec.alice_stake,
            bob_stake,
            fee: self.spec.fee,
        })
    }
}

impl Driver for RkDriver {
    fn module(&self) -> &'static str {
        "realitykeys"
    }

    fn step(&mut self, ctx: &mut Ctx, actor: &str, step: &Value) -> StepResult {
        let m = self.module();
        match parse_step::<Step>(step)? {
            Step::RegisterFact => {
                let f = self
                    .registry
                    .register_fact(
                        self.spec.question.clone(),
                        self.spec.resolution_time,
                        self.spec.source_ref.clone(),
                        ctx.now,
                        &ctx.feeds,
                        ctx.chain.keys_mut(),
                    )
                    .map_err(|e| e.to_string())?;
                ctx.emit(m, "fact_registered", json!(f));
                self.fact = Some(f.id);
            }
            Step::FundTemp => {
                let stake = if actor == self.spec.alice {
                    self.spec.alice_stake
                } else if actor == self.spec.bob {
                    self.spec.bob_stake
                } else {
                    return Err(format!("{actor} is not a party"));
                };
                let payer = *ctx.key(actor)?;
                let temp = demo_makekeys(&format!("harness/{actor}"));
                ctx.chain.register_key(&temp);
                let tx = build_payment(
                    ctx.chain.utxo(),
                    &payer,
                    vec![TxOut::to_key(stake, temp.public)],
                    self.spec.fee,
                    &ctx.mempool.reserved(),
                )
                .map_err(|e| e.to_string())?;
                self.temps.insert(actor.to_string(), (temp, tx.outpoint(0)));
                ctx.submit(m, &format!("{actor}_temp"), tx);
            }
            Step::Setup { bob_terms_differ } => {
                let alice_terms = self.terms(self.spec.bob_stake)?;
                let bob_stake = self.spec.bob_stake + if bob_terms_differ { 1 } else { 0 };
                let bob_terms = self.terms(bob_stake)?;
                let alice_temp = self.temp(&self.spec.alice)?.0;
                let bob_temp = self.temp(&self.spec.bob)?.0;
                let partial = demo_setup(ctx.chain.utxo(), &alice_terms, &alice_temp)
                    .map_err(|e| e.to_string())?;
                let (tx, contract) =
                    demo_countersign(ctx.chain.utxo(), &bob_terms, &bob_temp, &partial)
                        .map_err(|e| e.to_string())?;
                ctx.emit(m, "contract_setup", json!(contract));
                self.contract = Some(contract);
                ctx.submit(m, "rk_setup", tx);
            }
            Step::Refund => {
                let (temp, op) = *self.temp(actor)?;
                let dest = ctx.pubkey(actor)?;
                let tx = demo_refund(ctx.chain.utxo(), &temp, op, dest, self.spec.fee)
                    .map_err(|e| e.to_string())?;
                ctx.submit(m, &format!("{actor}_refund"), tx);
            }
            Step::PostResult => {
                let o = self
                    .registry
                    .post_result(self.fact()?, ctx.now, &ctx.feeds)
                    .map_err(|e| e.to_string())?;
                ctx.emit(m, "result_posted", json!({"outcome": o}));
            }
            Step::Object { tip, verdict } => {
                self.registry
                    .object(self.fact()?, tip, verdict, ctx.now)
                    .map_err(|e| e.to_string())?;
                let payer = *ctx.key(actor)?;
                let op = ctx.pubkey(&self.spec.operator)?;
                let tx = build_payment(
                    ctx.chain.utxo(),
                    &payer,
                    vec![TxOut::to_key(tip, op)],
                    self.spec.fee,
                    &ctx.mempool.reserved(),
                )
                .map_err(|e| e.to_string())?;
                ctx.emit(m, "objection", json!({"tip": tip, "verdict": verdict}));
                ctx.submit(m, "objection_tip", tx);
            }
            Step::Finalize => {
                let id = self.fact()?;
                self.registry
                    .finalize(id, ctx.now)
                    .map_err(|e| e.to_string())?;
                let (o, _) = self.registry.released(id).expect("finalized");
                ctx.emit(m, "key_released", json!({"outcome": o}));
            }
            Step::Claim => {
                let c = self.contract.as_ref().ok_or("no contract")?;
                let temp = self.temp(actor)?.0;
                let dest = ctx.pubkey(actor)?;
                let tx = demo_claim(c, &self.registry, &temp, dest, self.spec.fee)
                    .map_err(|e| e.to_string())?;
                ctx.submit(m, &format!("rk_claim_{actor}"), tx);
            }
        }
        Ok(())
    }

    fn final_state(&self, _ctx: &Ctx) -> Value {
        let released = self
            .fact
            .and_then(|id| self.registry.released(id))
            .map(|(o, _)| o);
        json!({
            "registry": self.registry.export_json(),
            "released": released,
            "releases": self.registry.releases().len(),
            "contract": self.contract,
        })
    }
}
