use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_step, Ctx, Driver, StepResult};
use crate::counterparty::{compose, replay, BetSide, MetaConfig, MetaMessage, Replica, XCP};
use crate::datafeed::{Comparator, EpochSeconds};
use crate::simchain::{keygen, Amount};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpSpec {
    /// Host miner fee on every message transaction.
    pub fee: Amount,
    #[serde(default)]
    pub config: MetaConfig,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Step {
    Burn {
        btc_qty: u64,
        /// Pay the burn to some other address.
        #[serde(default)]
        wrong_address: bool,
    },
    Send {
        qty: u64,
        dest: String,
    },
    Broadcast {
        value: f64,
        fee_fraction: u32,
        #[serde(default)]
        text: String,
        /// Defaults to the current sim time.
        #[serde(default)]
        timestamp: Option<EpochSeconds>,
    },
    Bet {
        feed: String,
        comparator: Comparator,
        target: f64,
        deadline: EpochSeconds,
        wager: u64,
        counterwager: u64,
        side: BetSide,
    },
}

pub struct CpDriver {
    spec: CpSpec,
    replica: Replica,
    seen: usize,
    applied: usize,
    seq: u64,
    violations: u64,
}

impl CpDriver {
    pub fn new(spec: CpSpec) -> Self {
        let replica = Replica::new(spec.config.clone());
        CpDriver {
            spec,
            replica,
            seen: 0,
            applied: 0,
            seq: 0,
            violations: 0,
        }
    }
}

impl Driver for CpDriver {
    fn module(&self) -> &'static str {
        "counterparty"
    }

    fn step(&mut self, ctx: &mut Ctx, actor: &str, step: &Value) -> StepResult {
        let mut config = self.spec.config.clone();
        let (op, msg) = match parse_step::<Step>(step)? {
            Step::Burn {
                btc_qty,
                wrong_address,
            } => {
                if wrong_address {
                    config.burn_address = keygen(b"counterparty/not-the-burn-address")
                        .expect("nonempty")
                        .public;
                }
                ("burn", MetaMessage::Burn { btc_qty })
            }
            Step::Send { qty, dest } => (
                "send",
                MetaMessage::Send {
                    asset: XCP.to_string(),
                    qty,
                    dest: ctx.pubkey(&dest)?,
                },
            ),
            Step::Broadcast {
                value,
                fee_fraction,
                text,
                timestamp,
            } => (
                "broadcast",
                MetaMessage::Broadcast {
                    timestamp: timestamp.unwrap_or(ctx.now),
                    value,
                    fee_fraction,
                    text,
                },
            ),
            Step::Bet {
                feed,
                comparator,
                target,
                deadline,
                wager,
                counterwager,
                side,
            } => (
                "bet",
                MetaMessage::Bet {
                    feed: ctx.pubkey(&feed)?,
                    comparator,
                    target,
                    deadline,
                    wager,
                    counterwager,
                    side,
                },
            ),
        };
        let sender = *ctx.key(actor)?;
        let tx = compose(
            ctx.chain.utxo(),
            &sender,
            &msg,
            ctx.mempool.policy(),
            &config,
            self.spec.fee,
            &ctx.mempool.reserved(),
        )
        .map_err(|e| e.to_string())?;
        self.seq += 1;
        ctx.submit("counterparty", &format!("cp_{op}_{}", self.seq), tx);
        Ok(())
    }

    fn after_block(&mut self, ctx: &mut Ctx) {
        // Genesis included: its outputs are the first message sources.
        for b in &ctx.chain.blocks()[self.applied..] {
            self.replica.apply_block(b);
        }
        self.applied = ctx.chain.blocks().len();
        let height = ctx.chain.tip_height();
        let entries: Vec<_> = self.replica.state.log[self.seen..].to_vec();
        self.seen = self.replica.state.log.len();
        for e in entries {
            let label = ctx.label_of(&e.txid).map(str::to_string);
            ctx.emit(
                "counterparty",
                "meta_tx",
                json!({"label": label, "entry": e}),
            );
        }
        if !self.replica.state.conserved() {
            self.violations += 1;
            ctx.emit(
                "counterparty",
                "conservation_violated",
                json!({"height": height, "balances": self.replica.state.total_balances(), "issued": self.replica.state.issued}),
            );
        }
    }

    fn final_state(&self, ctx: &Ctx) -> Value {
        let s = &self.replica.state;
        let xcp: BTreeMap<&str, u64> = ctx
            .accounts
            .iter()
            .map(|(n, k)| (n.as_str(), s.balance(&k.public, XCP)))
            .collect();
        let invalid: BTreeMap<String, Value> = s
            .log
            .iter()
            .filter(|e| !e.valid)
            .map(|e| {
                let l = ctx.label_of(&e.txid).unwrap_or("?").to_string();
                (l, json!(e.reason))
            })
            .collect();
        let bets: Vec<Value> = s.bets.values().map(|b| json!(b.status)).collect();
        let full = replay(&ctx.chain, &self.spec.config);
        json!({
            "xcp": xcp,
            "issued": s.issued,
            "burned_sat": s.burned_sat,
            "escrow": s.total_escrow(),
            "conserved": s.conserved() && self.violations == 0,
            "invalid": invalid,
            "bets": bets,
            "digest": s.digest(),
            "replay_matches": full.digest() == s.digest(),
        })
    }
}
