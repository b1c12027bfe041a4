use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_step, Ctx, Driver, StepResult};
use crate::datafeed::EpochSeconds;
use crate::orisi::{
    propose, AgentKeyring, Condition, ContractState, Draft, FeeOutput, MessageBus, OracleNode,
    OrisiContract, Proposal, DEFAULT_POLL_INTERVAL,
};
use crate::simchain::{Amount, Transaction, TxOut};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub id: String,
    pub min_fee: Amount,
    /// Never polls.
    #[serde(default)]
    pub offline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrisiSpec {
    pub alice: String,
    pub bob: String,
    /// Account receiving the project fee.
    pub project: String,
    pub oracles: Vec<OracleSpec>,
    pub m: usize,
    pub condition: Condition,
    pub amount: Amount,
    pub oracle_fee: Amount,
    pub project_fee: Amount,
    pub miner_fee: Amount,
    #[serde(default = "default_interval")]
    pub poll_interval: EpochSeconds,
    /// The beneficiary finalizes as soon as a draft has `m` signatures.
    #[serde(default = "yes")]
    pub auto_finalize: bool,
}

fn default_interval() -> EpochSeconds {
    DEFAULT_POLL_INTERVAL
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Step {
    Propose,
    /// Every oracle, or just the named one, checks the proposal.
    Ack {
        #[serde(default)]
        oracle: Option<String>,
    },
    Activate,
    Finalize {
        draft: Draft,
    },
    /// Every oracle signs a spend of the safe to the actor, without agent
    /// keys.
    Steal,
}

pub struct OrisiDriver {
    spec: OrisiSpec,
    nodes: Vec<OracleNode>,
    contract: Option<OrisiContract>,
    agents: Option<AgentKeyring>,
    bus: MessageBus,
    next_poll: Option<EpochSeconds>,
    finalized: Option<Draft>,
}

impl OrisiDriver {
    pub fn new(spec: OrisiSpec) -> Self {
        let nodes = spec
            .oracles
            .iter()
            .map(|o| OracleNode::new(o.id.clone(), o.min_fee))
            .collect();
        OrisiDriver {
            spec,
            nodes,
            contract: None,
            agents: None,
            bus: MessageBus::default(),
            next_poll: None,
            finalized: None,
        }
    }

    fn contract_mut(&mut self) -> Result<&mut OrisiContract, String> {
        self.contract
            .as_mut()
            .ok_or_else(|| "no contract".to_string())
    }

    fn finalize(&mut self, ctx: &mut Ctx, draft: Draft) -> StepResult {
        let agents = self.agents.as_ref().ok_or("no contract")?.keys.clone();
        let c = self.contract.as_mut().ok_or("no contract")?;
        let tx = c.finalize(draft, &agents).map_err(|e| e.to_string())?;
        self.finalized = Some(draft);
        let label = match draft {
            Draft::Unlock => "orisi_unlock",
            Draft::Refund => "orisi_refund",
        };
        ctx.emit("orisi", "finalized", json!({"draft": draft}));
        ctx.submit("orisi", label, tx);
        Ok(())
    }
}

impl Driver for OrisiDriver {
    fn module(&self) -> &'static str {
        "orisi"
    }

    fn step(&mut self, ctx: &mut Ctx, actor: &str, step: &Value) -> StepResult {
        let m = self.module();
        match parse_step::<Step>(step)? {
            Step::Propose => {
                for n in &self.nodes {
                    ctx.chain.register_key(n.keys());
                }
                let mut fees: Vec<FeeOutput> = self
                    .nodes
                    .iter()
                    .map(|n| FeeOutput {
                        to: n.keys().public,
                        value: self.spec.oracle_fee,
                    })
                    .collect();
                fees.push(FeeOutput {
                    to: ctx.pubkey(&self.spec.project)?,
                    value: self.spec.project_fee,
                });
                let alice = *ctx.key(&self.spec.alice)?;
                let bob = ctx.pubkey(&self.spec.bob)?;
                let reserved = ctx.mempool.reserved();
                let (utxo, keys) = (ctx.chain.utxo().clone(), ctx.chain.keys_mut());
                let (c, agents) = propose(
                    &utxo,
                    &reserved,
                    keys,
                    Proposal {
                        id: "harness",
                        alice: &alice,
                        bob,
                        oracles: self.nodes.iter().map(OracleNode::info).collect(),
                        m: self.spec.m,
                        condition: self.spec.condition.clone(),
                        amount: self.spec.amount,
                        fees,
                        miner_fee: self.spec.miner_fee,
                    },
                )
                .map_err(|e| e.to_string())?;
                ctx.emit(
                    m,
                    "proposed",
                    json!({"params": c.params, "oracles": c.oracles, "safe_outpoint": c.safe_outpoint}),
                );
                self.contract = Some(c);
                self.agents = Some(agents);
            }
            Step::Ack { oracle } => {
                let c = self.contract.as_mut().ok_or("no contract")?;
                for n in &self.nodes {
                    if oracle.as_ref().is_some_and(|o| *o != n.id) {
                        continue;
                    }
                    match c.oracle_ack(n, &ctx.feeds) {
                        Ok(()) => ctx.emit(m, "oracle_ack", json!({"oracle": n.id})),
                        Err(e) => ctx.emit(
                            m,
                            "ack_failed",
                            json!({"oracle": n.id, "error": e.to_string()}),
                        ),
                    }
                }
            }
            Step::Activate => {
                let tx = self.contract_mut()?.activate().map_err(|e| e.to_string())?;
                ctx.emit(m, "activated", json!({}));
                self.next_poll = Some(ctx.now);
                ctx.submit(m, "orisi_funding", tx);
            }
            Step::Finalize { draft } => self.finalize(ctx, draft)?,
            Step::Steal => {
                let c = self.contract.as_ref().ok_or("no contract")?;
                let thief = ctx.pubkey(actor)?;
                let mut tx = Transaction::spending(
                    &[c.safe_outpoint],
                    vec![TxOut::to_key(c.amount - self.spec.miner_fee, thief)],
                    0,
                );
                let h = tx.sighash();
                tx.inputs[0].witness.signatures =
                    self.nodes.iter().map(|n| n.keys().sign(&h)).collect();
                ctx.emit(m, "theft_attempt", json!({"signers": self.nodes.len()}));
                ctx.submit(m, "orisi_theft", tx);
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut Ctx) -> StepResult {
        let Some(next) = self.next_poll else {
            return Ok(());
        };
        let Some(c) = self.contract.as_mut() else {
            return Ok(());
        };
        if c.state != ContractState::Active || ctx.now < next || !ctx.is_confirmed("orisi_funding")
        {
            return Ok(());
        }
        self.next_poll =
            Some(next + self.spec.poll_interval * ((ctx.now - next) / self.spec.poll_interval + 1));
        for (n, s) in self.nodes.iter().zip(&self.spec.oracles) {
            if s.offline {
                continue;
            }
            match c.poll_and_sign(n, &ctx.feeds, ctx.now) {
                Ok(Some(msg)) => self.bus.publish(msg),
                Ok(None) => {}
                Err(e) => ctx.emit(
                    "orisi",
                    "poll_failed",
                    json!({"oracle": n.id, "error": e.to_string()}),
                ),
            }
        }
        let msgs: Vec<_> = self.bus.drain().collect();
        for msg in msgs {
            match c.receive(&msg, ctx.chain.keys()) {
                Ok(d) => {
                    let have = c.signatures_on(d);
                    ctx.emit(
                        "orisi",
                        "partial_signature",
                        json!({"draft": d, "signatures": have}),
                    );
                }
                Err(e) => ctx.emit("orisi", "message_dropped", json!({"error": e.to_string()})),
            }
        }
        if self.spec.auto_finalize {
            for d in [Draft::Unlock, Draft::Refund] {
                let c = self.contract.as_ref().expect("checked");
                if c.state == ContractState::Active && c.signatures_on(d) >= c.params.m {
                    self.finalize(ctx, d)?;
                }
            }
        }
        Ok(())
    }

    fn final_state(&self, _ctx: &Ctx) -> Value {
        let c = self.contract.as_ref();
        json!({
            "state": c.map(|c| c.state),
            "params": c.map(|c| c.params),
            "acks": c.map(|c| c.acks.len()),
            "unlock_signatures": c.map(|c| c.signatures_on(Draft::Unlock)),
            "refund_signatures": c.map(|c| c.signatures_on(Draft::Refund)),
            "finalized": self.finalized,
        })
    }
}
