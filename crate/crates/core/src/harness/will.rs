use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_step, Ctx, Driver, StepResult};
use crate::simchain::Amount;
use crate::will_oracle::{claim, claim_draft, create_will, OracleServer, WillContract};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WillSpec {
    pub creator: String,
    pub heir: String,
    /// Account whose key the oracle server uses.
    pub oracle: String,
    pub source: String,
    /// The committed expression; also the feed key the oracle looks up.
    pub expression: String,
    pub amount: Amount,
    pub fee: Amount,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Step {
    CreateWill,
    Claim {
        /// Expression presented to the oracle; defaults to the committed one.
        #[serde(default)]
        expression: Option<String>,
        /// Broadcast with only the heir's signature.
        #[serde(default)]
        without_oracle: bool,
    },
}

pub struct WillDriver {
    spec: WillSpec,
    contract: Option<WillContract>,
    claims: u32,
}

impl WillDriver {
    pub fn new(spec: WillSpec) -> Self {
        WillDriver {
            spec,
            contract: None,
            claims: 0,
        }
    }
}

impl Driver for WillDriver {
    fn module(&self) -> &'static str {
        "will_oracle"
    }

    fn step(&mut self, ctx: &mut Ctx, actor: &str, step: &Value) -> StepResult {
        let s = &self.spec;
        match parse_step::<Step>(step)? {
            Step::CreateWill => {
                let creator = *ctx.key(actor)?;
                let (c, tx) = create_will(
                    ctx.chain.utxo(),
                    &creator,
                    ctx.pubkey(&s.oracle)?,
                    ctx.pubkey(&s.heir)?,
                    &s.expression,
                    s.amount,
                    s.fee,
                    &ctx.mempool.reserved(),
                )
                .map_err(|e| e.to_string())?;
                ctx.emit(self.module(), "will_created", json!(c));
                self.contract = Some(c);
                ctx.submit(self.module(), "will_fund", tx);
                Ok(())
            }
            Step::Claim {
                expression,
                without_oracle,
            } => {
                let c = self.contract.clone().ok_or("no will yet")?;
                let heir = *ctx.key(actor)?;
                let expr = expression.unwrap_or_else(|| s.expression.clone());
                let draft = claim_draft(&c, &expr, heir.public, s.fee);
                self.claims += 1;
                let label = format!("will_claim_{}", self.claims);
                if without_oracle {
                    let tx = claim(draft, Some(&heir), None);
                    ctx.submit(self.module(), &label, tx);
                    return Ok(());
                }
                let oracle = OracleServer::new(*ctx.key(&s.oracle)?, s.source.clone());
                match oracle.request_signature(&c, &expr, &draft, &ctx.feeds, ctx.now) {
                    Ok(sig) => {
                        ctx.emit(self.module(), "oracle_signed", json!({"expression": expr}));
                        let tx = claim(draft, Some(&heir), Some(sig));
                        ctx.submit(self.module(), &label, tx);
                    }
                    Err(e) => {
                        ctx.emit(
                            self.module(),
                            "oracle_refused",
                            json!({"expression": expr, "reason": e.to_string()}),
                        );
                    }
                }
                Ok(())
            }
        }
    }

    fn final_state(&self, ctx: &Ctx) -> Value {
        json!({
            "contract": self.contract,
            "funded": ctx.is_confirmed("will_fund"),
            "claimed": (1..=self.claims).any(|i| ctx.is_confirmed(&format!("will_claim_{i}"))),
        })
    }
}
