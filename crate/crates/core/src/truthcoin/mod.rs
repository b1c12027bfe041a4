//! Truthcoin side ledger.
//!
//! Two coins: CSH (pegged cash, minted on peg-in and burned on peg-out) and
//! VTC (fixed-supply votecoins). Authors add decisions and LMSR markets over
//! them; once decisions mature they form a ballot that VTC holders vote on by
//! commit/reveal. Resolution moves VTC from inaccurate to accurate voters,
//! side-chain miners may veto the result, and confirmed markets redeem.
//!
//! All balances are integer base units (10^8 per coin). LMSR runs in
//! floating point and is quantized, round-half-even, when it touches a
//! balance.

mod ledger;
pub mod lmsr;
mod market;
mod voting;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datafeed::EpochSeconds;

pub use ledger::SideLedger;
pub use lmsr::{lmsr_cost, lmsr_price, lmsr_prices, lmsr_trade_cost};
pub use market::{quantize, Market, MarketId, TradeReceipt};
pub use voting::{
    veto_verdict, vote_commitment, Ballot, BallotId, BallotPhase, Resolution, SideBlock,
    VetoVerdict, Vote,
};

pub type Address = String;
pub type DecisionId = u64;

/// Base units per CSH or VTC.
pub const UNIT: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TruthcoinError {
    #[error("insufficient CSH: need {need}, have {have}")]
    InsufficientCSH { need: u64, have: u64 },
    #[error("insufficient VTC: need {need}, have {have}")]
    InsufficientVTC { need: u64, have: u64 },
    #[error("insufficient shares: need {need}, have {have}")]
    InsufficientShares { need: u64, have: u64 },
    #[error("maturity time is not in the future")]
    PastMaturity,
    #[error("scalar range requires min < max")]
    BadRange,
    #[error("unknown decision {0}")]
    UnknownDecision(DecisionId),
    #[error("unknown market {0}")]
    UnknownMarket(MarketId),
    #[error("unknown ballot {0}")]
    UnknownBallot(BallotId),
    #[error("decision {0} is not open for new markets")]
    DecisionNotOpen(DecisionId),
    #[error("liquidity parameter must be positive and a market needs 1..=8 decisions")]
    BadMarket,
    #[error("invalid trade: {0}")]
    BadTrade(&'static str),
    #[error("commit phase closed")]
    CommitClosed,
    #[error("reveal phase is not open")]
    RevealNotOpen,
    #[error("reveal does not match the commitment")]
    RevealMismatch,
    #[error("voter has no commitment on this ballot")]
    NoCommitment,
    #[error("reveal phase still open")]
    RevealOpen,
    #[error("ballot is in phase {0:?}")]
    WrongPhase(BallotPhase),
    #[error("veto window still open")]
    WindowOpen,
    #[error("linked decisions are not confirmed")]
    NotConfirmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DecisionKind {
    Binary,
    Scalar { min: f64, max: f64 },
}

impl DecisionKind {
    pub fn range(&self) -> f64 {
        match self {
            DecisionKind::Binary => 1.0,
            DecisionKind::Scalar { min, max } => max - min,
        }
    }

    pub fn in_range(&self, v: f64) -> bool {
        match self {
            DecisionKind::Binary => (0.0..=1.0).contains(&v),
            DecisionKind::Scalar { min, max } => v >= *min && v <= *max,
        }
    }

    fn lower(&self) -> f64 {
        match self {
            DecisionKind::Binary => 0.0,
            DecisionKind::Scalar { min, .. } => *min,
        }
    }
}

/// A decision's resolved value. `Unresolvable` is the ".5" state for
/// questions that did not reach quorum or were evenly split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ResolvedValue {
    Value(f64),
    Unresolvable,
}

impl ResolvedValue {
    /// Position in [0,1] used for payouts.
    pub fn normalized(&self, kind: &DecisionKind) -> f64 {
        match self {
            ResolvedValue::Unresolvable => 0.5,
            ResolvedValue::Value(v) => ((v - kind.lower()) / kind.range()).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum DecisionState {
    Open,
    Mature { ballot: BallotId },
    Resolved { outcome: ResolvedValue },
    Confirmed { outcome: ResolvedValue },
    Revote { ballot: BallotId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub id: DecisionId,
    pub author: Address,
    pub prompt: String,
    pub kind: DecisionKind,
    pub maturity_time: EpochSeconds,
    pub state: DecisionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthcoinConfig {
    /// Participating stake needed, in basis points of total VTC.
    pub quorum_bps: u64,
    /// Slash severity σ in [0,1].
    pub slash_severity: f64,
    pub commit_period: EpochSeconds,
    pub reveal_period: EpochSeconds,
    pub waiting_period: EpochSeconds,
    pub veto_window_blocks: usize,
}

impl Default for TruthcoinConfig {
    fn default() -> Self {
        TruthcoinConfig {
            quorum_bps: 5_000,
            slash_severity: 1.0,
            commit_period: 86_400,
            reveal_period: 86_400,
            waiting_period: 7 * 86_400,
            veto_window_blocks: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Truthcoin {
    pub config: TruthcoinConfig,
    pub ledger: SideLedger,
    decisions: BTreeMap<DecisionId, Decision>,
    markets: BTreeMap<MarketId, Market>,
    ballots: BTreeMap<BallotId, Ballot>,
    side_blocks: Vec<SideBlock>,
    next_id: u64,
}

impl Truthcoin {
    /// A side chain whose entire VTC supply is allocated up front.
    pub fn new(config: TruthcoinConfig, vtc_allocations: &[(Address, u64)]) -> Self {
        let mut ledger = SideLedger::default();
        for (addr, units) in vtc_allocations {
            ledger.allocate_vtc(addr, *units);
        }
        Truthcoin {
            config,
            ledger,
            decisions: BTreeMap::new(),
            markets: BTreeMap::new(),
            ballots: BTreeMap::new(),
            side_blocks: vec![],
            next_id: 1,
        }
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn decision(&self, id: DecisionId) -> Result<&Decision, TruthcoinError> {
        self.decisions
            .get(&id)
            .ok_or(TruthcoinError::UnknownDecision(id))
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Decision> {
        self.decisions.values()
    }

    pub fn market(&self, id: MarketId) -> Result<&Market, TruthcoinError> {
        self.markets
            .get(&id)
            .ok_or(TruthcoinError::UnknownMarket(id))
    }

    pub fn markets(&self) -> impl Iterator<Item = &Market> {
        self.markets.values()
    }

    pub fn ballot(&self, id: BallotId) -> Result<&Ballot, TruthcoinError> {
        self.ballots
            .get(&id)
            .ok_or(TruthcoinError::UnknownBallot(id))
    }

    pub fn ballots(&self) -> impl Iterator<Item = &Ballot> {
        self.ballots.values()
    }

    pub fn side_blocks(&self) -> &[SideBlock] {
        &self.side_blocks
    }

    pub fn add_decision(
        &mut self,
        author: &str,
        prompt: impl Into<String>,
        kind: DecisionKind,
        maturity_time: EpochSeconds,
        now: EpochSeconds,
    ) -> Result<DecisionId, TruthcoinError> {
        if maturity_time <= now {
            return Err(TruthcoinError::PastMaturity);
        }
        if let DecisionKind::Scalar { min, max } = kind {
            if min >= max || !min.is_finite() || !max.is_finite() {
                return Err(TruthcoinError::BadRange);
            }
        }
        let id = self.fresh_id();
        self.decisions.insert(
            id,
            Decision {
                id,
                author: author.to_string(),
                prompt: prompt.into(),
                kind,
                maturity_time,
                state: DecisionState::Open,
            },
        );
        Ok(id)
    }

    /// Total CSH in existence: free balances plus market collateral.
    pub fn csh_in_circulation(&self) -> u64 {
        self.ledger.total_csh() + self.markets.values().map(|m| m.collateral).sum::<u64>()
    }

    pub fn export_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}
