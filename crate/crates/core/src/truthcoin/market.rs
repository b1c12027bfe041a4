use std::collections::BTreeMap;

use serde::Serialize;

use super::lmsr::{lmsr_cost, lmsr_prices};
use super::{Address, DecisionId, DecisionState, ResolvedValue, Truthcoin, TruthcoinError, UNIT};

pub type MarketId = u64;

/// Largest number of decisions one market may combine (2^8 states).
pub const MAX_MARKET_DECISIONS: usize = 8;

/// CSH amount to base units, rounding half to even.
pub fn quantize(csh: f64) -> i64 {
    (csh * UNIT as f64).round_ties_even() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Market {
    pub id: MarketId,
    pub author: Address,
    pub decisions: Vec<DecisionId>,
    /// Liquidity parameter in CSH.
    pub b: f64,
    /// Outstanding shares per state, base units. State `s` has bit `j` set
    /// when decision `j` resolves high.
    pub q: Vec<u64>,
    pub fee_rate: f64,
    pub shares: BTreeMap<Address, Vec<u64>>,
    pub collateral: u64,
    pub fees_collected: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TradeReceipt {
    /// Signed cost-function change, base units; negative on sells.
    pub charge: i64,
    pub fee: u64,
}

impl Market {
    pub fn n_states(&self) -> usize {
        self.q.len()
    }

    fn q_csh(q: &[u64]) -> Vec<f64> {
        q.iter().map(|&x| x as f64 / UNIT as f64).collect()
    }

    /// Quantized cost function at the current state.
    pub fn cost_units(&self) -> i64 {
        quantize(lmsr_cost(&Self::q_csh(&self.q), self.b))
    }

    pub fn prices(&self) -> Vec<f64> {
        lmsr_prices(&Self::q_csh(&self.q), self.b)
    }

    pub fn holding(&self, who: &str, state: usize) -> u64 {
        self.shares.get(who).map(|v| v[state]).unwrap_or(0)
    }

    /// What a trade of `delta` base-unit shares in `state` would cost,
    /// without applying it.
    pub fn quote(&self, state: usize, delta: i64) -> Result<TradeReceipt, TruthcoinError> {
        if state >= self.q.len() {
            return Err(TruthcoinError::BadTrade("state out of range"));
        }
        let mut next = self.q.clone();
        let cur = next[state] as i128 + delta as i128;
        if cur < 0 || cur > u64::MAX as i128 {
            return Err(TruthcoinError::BadTrade("share count out of range"));
        }
        next[state] = cur as u64;
        let charge = quantize(lmsr_cost(&Self::q_csh(&next), self.b)) - self.cost_units();
        let fee = (charge.unsigned_abs() as f64 * self.fee_rate).floor() as u64;
        Ok(TradeReceipt { charge, fee })
    }

    /// Payoff per share of each state, given normalized decision values.
    pub fn state_payoffs(values: &[f64]) -> Vec<f64> {
        (0..1usize << values.len())
            .map(|s| {
                values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| if s >> j & 1 == 1 { *v } else { 1.0 - v })
                    .product()
            })
            .collect()
    }
}

impl Truthcoin {
    /// Opens an LMSR market over `decisions`. The author funds the maker's
    /// worst-case loss `C(0) = b ln(#states)`.
    pub fn add_market(
        &mut self,
        author: &str,
        decisions: &[DecisionId],
        b: f64,
        fee_rate: f64,
    ) -> Result<MarketId, TruthcoinError> {
        if !(b > 0.0 && b.is_finite())
            || decisions.is_empty()
            || decisions.len() > MAX_MARKET_DECISIONS
            || !(0.0..1.0).contains(&fee_rate)
        {
            return Err(TruthcoinError::BadMarket);
        }
        for d in decisions {
            if self.decision(*d)?.state != DecisionState::Open {
                return Err(TruthcoinError::DecisionNotOpen(*d));
            }
        }
        let n_states = 1usize << decisions.len();
        let funding = quantize(b * (n_states as f64).ln()) as u64;
        self.ledger.debit_csh(author, funding)?;
        let id = self.fresh_id();
        self.markets.insert(
            id,
            Market {
                id,
                author: author.to_string(),
                decisions: decisions.to_vec(),
                b,
                q: vec![0; n_states],
                fee_rate,
                shares: BTreeMap::new(),
                collateral: funding,
                fees_collected: 0,
            },
        );
        Ok(id)
    }

    fn market_open(&self, m: &Market) -> bool {
        m.decisions.iter().all(|d| {
            matches!(
                self.decisions.get(d).map(|x| x.state),
                Some(DecisionState::Open)
            )
        })
    }

    /// Buys (`delta > 0`) or sells (`delta < 0`) shares of one state.
    /// Everything is checked before anything moves.
    pub fn trade(
        &mut self,
        market: MarketId,
        trader: &str,
        state: usize,
        delta: i64,
    ) -> Result<TradeReceipt, TruthcoinError> {
        let m = self.market(market)?;
        if !self.market_open(m) {
            return Err(TruthcoinError::BadTrade("market closed"));
        }
        if delta == 0 {
            return Err(TruthcoinError::BadTrade("zero shares"));
        }
        if delta < 0 && state < m.n_states() {
            let have = m.holding(trader, state);
            if have < delta.unsigned_abs() {
                return Err(TruthcoinError::InsufficientShares {
                    need: delta.unsigned_abs(),
                    have,
                });
            }
        }
        let receipt = m.quote(state, delta)?;
        // Net CSH flow from the trader: charge plus fee (charge < 0 on sells).
        let net = receipt.charge as i128 + receipt.fee as i128;
        let have = self.ledger.csh(trader);
        if net > 0 && (have as i128) < net {
            return Err(TruthcoinError::InsufficientCSH {
                need: net as u64,
                have,
            });
        }
        let author = m.author.clone();
        let m = self.markets.get_mut(&market).expect("checked");
        if net > 0 {
            self.ledger.debit_csh(trader, net as u64)?;
        } else {
            self.ledger.credit_csh(trader, (-net) as u64);
        }
        self.ledger.credit_csh(&author, receipt.fee);
        m.fees_collected += receipt.fee;
        m.collateral = (m.collateral as i64 + receipt.charge) as u64;
        m.q[state] = (m.q[state] as i64 + delta) as u64;
        let n = m.q.len();
        let h = m
            .shares
            .entry(trader.to_string())
            .or_insert_with(|| vec![0; n]);
        h[state] = (h[state] as i64 + delta) as u64;
        Ok(receipt)
    }

    /// Pays out every share `holder` owns once all linked decisions are
    /// confirmed.
    pub fn redeem(&mut self, market: MarketId, holder: &str) -> Result<u64, TruthcoinError> {
        let m = self.market(market)?;
        let mut values = Vec::with_capacity(m.decisions.len());
        for d in &m.decisions {
            let dec = self.decision(*d)?;
            match dec.state {
                DecisionState::Confirmed { outcome } => values.push(outcome.normalized(&dec.kind)),
                _ => return Err(TruthcoinError::NotConfirmed),
            }
        }
        let payoffs = Market::state_payoffs(&values);
        let m = self.markets.get_mut(&market).expect("checked");
        let Some(held) = m.shares.remove(holder) else {
            return Ok(0);
        };
        let mut pay = 0u64;
        for (s, n) in held.iter().enumerate() {
            pay += (*n as f64 * payoffs[s]).floor() as u64;
            m.q[s] -= n;
        }
        let pay = pay.min(m.collateral);
        m.collateral -= pay;
        self.ledger.credit_csh(holder, pay);
        Ok(pay)
    }

    /// Outcome view for harness assertions.
    pub fn outcome(&self, id: DecisionId) -> Option<ResolvedValue> {
        match self.decisions.get(&id)?.state {
            DecisionState::Resolved { outcome } | DecisionState::Confirmed { outcome } => {
                Some(outcome)
            }
            _ => None,
        }
    }
}
