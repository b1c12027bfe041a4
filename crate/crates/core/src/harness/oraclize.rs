use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_step, Ctx, Driver, StepResult};
use crate::datafeed::{
    Attestor, Comparator, EpochSeconds, HonestAttestor, TamperingAttestor, Value as FeedValue,
};
use crate::oraclize::{
    build_contract, co_sign_and_broadcast, Condition, ConditionalContract, ContractSpec,
    ContractState, SignedSettlement, DEFAULT_POLL_INTERVAL,
};
use crate::simchain::{Amount, PubKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OzCondition {
    pub source_id: String,
    pub key: String,
    pub comparator: Comparator,
    #[serde(default)]
    pub threshold: f64,
    /// Account name.
    pub beneficiary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OzSpec {
    pub alice: String,
    pub bob: String,
    pub oracle: String,
    #[serde(default)]
    pub arbitrator: Option<String>,
    pub conditions: Vec<OzCondition>,
    pub default_beneficiary: String,
    pub start: EpochSeconds,
    pub end: EpochSeconds,
    #[serde(default = "default_interval")]
    pub poll_interval: EpochSeconds,
    pub refund_locktime: u64,
    pub proofshield: bool,
    pub alice_stake: Amount,
    pub bob_stake: Amount,
    pub fee: Amount,
    /// The oracle never polls.
    #[serde(default)]
    pub oracle_offline: bool,
    /// The attestation service forges proofs claiming this value.
    #[serde(default)]
    pub forged_value: Option<FeedValue>,
}

fn default_interval() -> EpochSeconds {
    DEFAULT_POLL_INTERVAL
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Step {
    Build,
    /// The arbitrator pays the whole contract to the named account.
    Arbitrate {
        to: String,
    },
}

const ATTESTOR: &str = "attestation-service";

pub struct OzDriver {
    spec: OzSpec,
    contract: Option<ConditionalContract>,
}

impl OzDriver {
    pub fn new(spec: OzSpec) -> Self {
        OzDriver {
            spec,
            contract: None,
        }
    }

    fn attestor(&self) -> Box<dyn Attestor> {
        match &self.spec.forged_value {
            Some(v) => Box::new(TamperingAttestor {
                id: ATTESTOR.to_string(),
                substitute: v.clone(),
            }),
            None => Box::new(HonestAttestor::new(ATTESTOR)),
        }
    }

    fn account_of(ctx: &Ctx, key: PubKey) -> Option<String> {
        ctx.accounts
            .iter()
            .find(|(_, k)| k.public == key)
            .map(|(n, _)| n.clone())
    }

    /// The payee adds the second signature and broadcasts.
    fn deliver(&self, ctx: &mut Ctx, s: &SignedSettlement, label: &str) -> StepResult {
        let c = self.contract.as_ref().expect("settled contract");
        let to = s.tx.outputs[0].lock.clone();
        let payee = [&self.spec.alice, &self.spec.bob]
            .into_iter()
            .find(|n| {
                ctx.pubkey(n)
                    .is_ok_and(|p| to == crate::simchain::LockScript::pay_to_key(p))
            })
            .ok_or("settlement pays neither party")?;
        let agent = *ctx.key(payee)?;
        let tx =
            co_sign_and_broadcast(c, s, &agent, ctx.chain.keys()).map_err(|e| e.to_string())?;
        ctx.emit(
            "oraclize",
            "settled",
            json!({"to": payee, "condition": s.condition, "proof_valid": s.proof_valid, "verified_before_signing": s.verified_before_signing}),
        );
        ctx.submit("oraclize", label, tx);
        Ok(())
    }
}

impl Driver for OzDriver {
    fn module(&self) -> &'static str {
        "oraclize"
    }

    fn step(&mut self, ctx: &mut Ctx, actor: &str, step: &Value) -> StepResult {
        match parse_step::<Step>(step)? {
            Step::Build => {
                let s = &self.spec;
                let conditions = s
                    .conditions
                    .iter()
                    .map(|c| {
                        Ok(Condition {
                            source_id: c.source_id.clone(),
                            key: c.key.clone(),
                            comparator: c.comparator,
                            threshold: c.threshold,
                            beneficiary: ctx.pubkey(&c.beneficiary)?,
                        })
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                let spec = ContractSpec {
                    alice: ctx.pubkey(&s.alice)?,
                    bob: ctx.pubkey(&s.bob)?,
                    oracle: ctx.pubkey(&s.oracle)?,
                    arbitrator: s.arbitrator.as_ref().map(|a| ctx.pubkey(a)).transpose()?,
                    conditions,
                    default_beneficiary: ctx.pubkey(&s.default_beneficiary)?,
                    start: s.start,
                    end: s.end,
                    poll_interval: s.poll_interval,
                    refund_locktime: s.refund_locktime,
                    proofshield: s.proofshield,
                    alice_stake: s.alice_stake,
                    bob_stake: s.bob_stake,
                    fee: s.fee,
                };
                let alice = *ctx.key(&s.alice)?;
                let bob = *ctx.key(&s.bob)?;
                let (c, tx) = build_contract(
                    ctx.chain.utxo(),
                    spec,
                    &alice,
                    &bob,
                    &ctx.feeds,
                    &ctx.mempool.reserved(),
                )
                .map_err(|e| e.to_string())?;
                ctx.emit("oraclize", "contract_built", json!({"funding": c.funding, "amount": c.amount, "polls": c.spec.poll_times().count()}));
                self.contract = Some(c);
                ctx.submit("oraclize", "oz_funding", tx);
            }
            Step::Arbitrate { to } => {
                let arb = *ctx.key(actor)?;
                let to = ctx.pubkey(&to)?;
                let c = self.contract.as_mut().ok_or("no contract")?;
                let s = c.arbitrate(&arb, to).map_err(|e| e.to_string())?;
                self.deliver(ctx, &s, "oz_settlement")?;
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut Ctx) -> StepResult {
        let Some(c) = self.contract.as_ref() else {
            return Ok(());
        };
        if c.state != ContractState::Active || !ctx.is_confirmed("oz_funding") {
            return Ok(());
        }
        let next_height = ctx.chain.tip_height() + 1;
        if next_height >= c.spec.refund_locktime {
            let c = self.contract.as_mut().expect("checked");
            let tx = c.refund_expiry(next_height).map_err(|e| e.to_string())?;
            ctx.emit("oraclize", "refunded", json!({"height": next_height}));
            ctx.submit("oraclize", "oz_refund", tx);
            return Ok(());
        }
        if self.spec.oracle_offline {
            return Ok(());
        }
        let oracle = *ctx.key(&self.spec.oracle)?;
        let now = ctx.now;
        let on_schedule = c.spec.poll_times().any(|t| t == now);
        let past_end = now >= c.spec.end;
        let attestor = self.attestor();
        let c = self.contract.as_mut().expect("checked");
        let settled = if on_schedule {
            match c.poll(now, &ctx.feeds, attestor.as_ref(), &oracle) {
                Ok(Some(s)) => Some(s),
                Ok(None) => {
                    ctx.emit("oraclize", "poll", json!({"time": now, "matched": false}));
                    None
                }
                Err(e) => {
                    ctx.emit(
                        "oraclize",
                        "poll_refused",
                        json!({"time": now, "error": e.to_string()}),
                    );
                    None
                }
            }
        } else if past_end {
            Some(c.settle_default(now, &oracle).map_err(|e| e.to_string())?)
        } else {
            None
        };
        if let Some(s) = settled {
            self.deliver(ctx, &s, "oz_settlement")?;
        }
        Ok(())
    }

    fn final_state(&self, ctx: &Ctx) -> Value {
        let c = self.contract.as_ref();
        let winner = c.and_then(|c| match c.state {
            ContractState::SettledCondition { index } => Some(c.spec.conditions[index].beneficiary),
            ContractState::SettledDefault => Some(c.spec.default_beneficiary),
            _ => None,
        });
        let unverified = c.map_or(0, |c| {
            c.audit
                .iter()
                .filter(|a| a.signed && !a.proof_valid)
                .count()
        });
        json!({
            "state": c.map(|c| c.state),
            "winner": winner.and_then(|k| Self::account_of(ctx, k)),
            "audit_records": c.map_or(0, |c| c.audit.len()),
            "unverified_signed": unverified,
        })
    }
}
