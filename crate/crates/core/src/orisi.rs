//! Orisi: a "safe" multisig controlled by a set of independent oracles.
//!
//! With `n` oracles and a majority `m`, the safe is an
//! `(n+1)-of-(2n-m+1)` multisig: the `n` oracle keys plus `n-m+1` agent keys
//! held by the beneficiary. Any `m` oracles plus the agent keys reach the
//! threshold, while all `n` oracles together fall one short.
//!
//! Oracles talk over a message bus whose messages carry a hashcash-style
//! proof of work.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datafeed::{Comparator, EpochSeconds, FeedError, FeedSet};
use crate::simchain::codec::{DecodeError, Decoder, Encoder};
use crate::simchain::wallet::{build_payment, WalletError};
use crate::simchain::{
    keygen, sha256_concat, Amount, Digest, KeyPair, KeyRegistry, LockScript, OutPoint, PubKey,
    Signature, SignatureVerifier, Transaction, TxOut, UtxoSet, MAX_MULTISIG_KEYS,
};

pub const DEFAULT_POW_DIFFICULTY: u32 = 8;
pub const DEFAULT_POLL_INTERVAL: EpochSeconds = 3600;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrisiError {
    #[error("{total} keys needed, the multisig limit is 15")]
    KeyLimitExceeded { total: usize },
    #[error("need 1 <= m <= n, got m={m} n={n}")]
    BadQuorum { m: usize, n: usize },
    #[error("contract amount must be positive")]
    ZeroAmount,
    #[error("fee list must have one entry per oracle plus the project ({expected}), got {got}")]
    FeeListMismatch { expected: usize, got: usize },
    #[error("no fee output for oracle {0}")]
    MissingOracleFee(String),
    #[error("fees leave nothing for the beneficiary")]
    FeesExceedAmount,
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("oracle {oracle} rejected the request: {reason}")]
    VerificationFailed { oracle: String, reason: String },
    #[error("unknown oracle {0}")]
    UnknownOracle(String),
    #[error("not every oracle acknowledged ({acked}/{total})")]
    NotAllAcked { acked: usize, total: usize },
    #[error("operation not allowed in state {0:?}")]
    WrongState(ContractState),
    #[error("bus message proof of work below difficulty {0}")]
    InvalidPoW(u32),
    #[error("malformed bus message: {0}")]
    BadMessage(String),
    #[error(transparent)]
    Feed(#[from] FeedError),
    #[error("{have} signatures collected, {need} required")]
    QuorumNotReached { have: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeParams {
    pub m: usize,
    pub n: usize,
    pub threshold: usize,
    pub total_keys: usize,
    pub agent_keys: usize,
}

/// Turns `m of n` oracles into the padded `(n+1) of (2n-m+1)` safe.
pub fn compute_safe_params(m: usize, n: usize) -> Result<SafeParams, OrisiError> {
    if m < 1 || m > n {
        return Err(OrisiError::BadQuorum { m, n });
    }
    let total_keys = 2 * n - m + 1;
    if total_keys > MAX_MULTISIG_KEYS {
        return Err(OrisiError::KeyLimitExceeded { total: total_keys });
    }
    Ok(SafeParams {
        m,
        n,
        threshold: n + 1,
        total_keys,
        agent_keys: n - m + 1,
    })
}

/// `(source, key, comparator, threshold, settle_time)`. True at any poll
/// means unlock; false at or after `settle_time` means refund.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub source_id: String,
    pub key: String,
    pub comparator: Comparator,
    pub threshold: f64,
    pub settle_time: EpochSeconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Draft {
    /// Pays the beneficiary (Bob).
    Unlock,
    /// Returns the funds to the depositor (Alice).
    Refund,
}

impl Draft {
    fn tag(self) -> u8 {
        match self {
            Draft::Unlock => 0,
            Draft::Refund => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Draft::Unlock),
            1 => Some(Draft::Refund),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractState {
    Proposed,
    Acked,
    Active,
    Settled,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub id: String,
    pub public: PubKey,
}

/// An oracle node: its keys and the minimum fee it wants per contract.
#[derive(Debug, Clone)]
pub struct OracleNode {
    pub id: String,
    keys: KeyPair,
    pub min_fee: Amount,
}

impl OracleNode {
    pub fn new(id: impl Into<String>, min_fee: Amount) -> Self {
        let id = id.into();
        let keys = keygen(format!("orisi/oracle/{id}").as_bytes()).expect("nonempty");
        OracleNode { id, keys, min_fee }
    }

    pub fn info(&self) -> OracleInfo {
        OracleInfo {
            id: self.id.clone(),
            public: self.keys.public,
        }
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeOutput {
    pub to: PubKey,
    pub value: Amount,
}

/// The padding keys. Both parties receive a copy; which draft they can
/// finalize depends on which one the oracles signed.
#[derive(Debug, Clone)]
pub struct AgentKeyring {
    pub keys: Vec<KeyPair>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrisiContract {
    pub id: String,
    pub params: SafeParams,
    pub oracles: Vec<OracleInfo>,
    pub agent_pubs: Vec<PubKey>,
    pub safe_lock: LockScript,
    pub condition: Condition,
    pub amount: Amount,
    pub alice_pub: PubKey,
    pub bob_pub: PubKey,
    pub fees: Vec<FeeOutput>,
    pub funding_tx: Transaction,
    pub safe_outpoint: OutPoint,
    pub unlock_tx: Transaction,
    pub refund_tx: Transaction,
    pub state: ContractState,
    pub acks: BTreeSet<String>,
    pub partials: BTreeMap<Draft, BTreeMap<String, Signature>>,
    pub pow_difficulty: u32,
}

pub struct Proposal<'a> {
    pub id: &'a str,
    pub alice: &'a KeyPair,
    pub bob: PubKey,
    pub oracles: Vec<OracleInfo>,
    pub m: usize,
    pub condition: Condition,
    pub amount: Amount,
    pub fees: Vec<FeeOutput>,
    pub miner_fee: Amount,
}

/// Alice drafts the safe, her funding transaction (signed, not broadcast)
/// and both unlock drafts. The agent keys are returned separately.
pub fn propose(
    utxo: &UtxoSet,
    reserved: &BTreeSet<OutPoint>,
    verifier: &mut KeyRegistry,
    p: Proposal<'_>,
) -> Result<(OrisiContract, AgentKeyring), OrisiError> {
    let params = compute_safe_params(p.m, p.oracles.len())?;
    if p.amount == 0 {
        return Err(OrisiError::ZeroAmount);
    }
    if p.fees.len() != params.n + 1 {
        return Err(OrisiError::FeeListMismatch {
            expected: params.n + 1,
            got: p.fees.len(),
        });
    }
    for o in &p.oracles {
        if !p.fees.iter().any(|f| f.to == o.public) {
            return Err(OrisiError::MissingOracleFee(o.id.clone()));
        }
    }
    let fee_total: Amount = p.fees.iter().map(|f| f.value).sum();
    if fee_total + p.miner_fee >= p.amount {
        return Err(OrisiError::FeesExceedAmount);
    }

    let agents = AgentKeyring {
        keys: (0..params.agent_keys)
            .map(|i| keygen(format!("orisi/{}/agent/{i}", p.id).as_bytes()).expect("nonempty"))
            .collect(),
    };
    for k in &agents.keys {
        verifier.register(k);
    }
    let agent_pubs: Vec<PubKey> = agents.keys.iter().map(|k| k.public).collect();
    let safe_lock = safe_lock(params, &p.oracles, &agent_pubs);
    let funding_tx = build_payment(
        utxo,
        p.alice,
        vec![TxOut::new(p.amount, safe_lock.clone())],
        p.miner_fee,
        reserved,
    )?;
    let safe_outpoint = funding_tx.outpoint(0);
    let payout = p.amount - fee_total - p.miner_fee;
    let draft = |to: PubKey| {
        let mut outputs = vec![TxOut::to_key(payout, to)];
        outputs.extend(p.fees.iter().map(|f| TxOut::to_key(f.value, f.to)));
        Transaction::spending(&[safe_outpoint], outputs, 0)
    };
    let contract = OrisiContract {
        id: p.id.to_string(),
        params,
        oracles: p.oracles.clone(),
        agent_pubs,
        safe_lock,
        condition: p.condition,
        amount: p.amount,
        alice_pub: p.alice.public,
        bob_pub: p.bob,
        unlock_tx: draft(p.bob),
        refund_tx: draft(p.alice.public),
        fees: p.fees,
        funding_tx,
        safe_outpoint,
        state: ContractState::Proposed,
        acks: BTreeSet::new(),
        partials: BTreeMap::new(),
        pow_difficulty: DEFAULT_POW_DIFFICULTY,
    };
    Ok((contract, agents))
}

fn safe_lock(params: SafeParams, oracles: &[OracleInfo], agents: &[PubKey]) -> LockScript {
    let mut keys: Vec<PubKey> = oracles.iter().map(|o| o.public).collect();
    keys.extend_from_slice(agents);
    LockScript::multisig(params.threshold, keys).expect("params checked against the key cap")
}

impl OrisiContract {
    pub fn draft(&self, which: Draft) -> &Transaction {
        match which {
            Draft::Unlock => &self.unlock_tx,
            Draft::Refund => &self.refund_tx,
        }
    }

    fn oracle(&self, id: &str) -> Result<&OracleInfo, OrisiError> {
        self.oracles
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| OrisiError::UnknownOracle(id.to_string()))
    }

    /// The oracle checks the drafts spend the expected safe, pay it its fee,
    /// and that it can evaluate the condition.
    pub fn oracle_ack(&mut self, oracle: &OracleNode, feeds: &FeedSet) -> Result<(), OrisiError> {
        if !matches!(self.state, ContractState::Proposed | ContractState::Acked) {
            return Err(OrisiError::WrongState(self.state));
        }
        self.oracle(&oracle.id)?;
        let fail = |reason: &str| OrisiError::VerificationFailed {
            oracle: oracle.id.clone(),
            reason: reason.to_string(),
        };
        let expected = safe_lock(self.params, &self.oracles, &self.agent_pubs);
        if self.funding_tx.outputs.first().map(|o| &o.lock) != Some(&expected)
            || self.funding_tx.outpoint(0) != self.safe_outpoint
        {
            return Err(fail("funding does not pay the expected safe"));
        }
        for d in [&self.unlock_tx, &self.refund_tx] {
            if d.inputs.len() != 1 || d.inputs[0].outpoint != self.safe_outpoint {
                return Err(fail("draft does not spend the safe"));
            }
            let paid = d.outputs.iter().any(|o| {
                o.lock == LockScript::pay_to_key(oracle.keys.public) && o.value >= oracle.min_fee
            });
            if !paid {
                return Err(fail("draft does not pay this oracle's fee"));
            }
        }
        if feeds.get(&self.condition.source_id).is_err() {
            return Err(fail("condition source unknown"));
        }
        self.acks.insert(oracle.id.clone());
        if self.acks.len() == self.oracles.len() {
            self.state = ContractState::Acked;
        }
        Ok(())
    }

    /// Returns the funding transaction for broadcast once every oracle has
    /// acknowledged.
    pub fn activate(&mut self) -> Result<Transaction, OrisiError> {
        if self.state != ContractState::Acked {
            if self.state == ContractState::Proposed {
                return Err(OrisiError::NotAllAcked {
                    acked: self.acks.len(),
                    total: self.oracles.len(),
                });
            }
            return Err(OrisiError::WrongState(self.state));
        }
        self.state = ContractState::Active;
        Ok(self.funding_tx.clone())
    }

    /// One oracle poll. Returns a signed bus message if the oracle decided
    /// to sign a draft it has not signed yet.
    pub fn poll_and_sign(
        &self,
        oracle: &OracleNode,
        feeds: &FeedSet,
        now: EpochSeconds,
    ) -> Result<Option<BusMessage>, OrisiError> {
        if self.state != ContractState::Active {
            return Err(OrisiError::WrongState(self.state));
        }
        self.oracle(&oracle.id)?;
        let c = &self.condition;
        let obs = feeds.query(&c.source_id, &c.key, now)?;
        let draft = if c.comparator.eval(&obs.value, c.threshold) {
            Draft::Unlock
        } else if now >= c.settle_time {
            Draft::Refund
        } else {
            return Ok(None);
        };
        if self
            .partials
            .get(&draft)
            .is_some_and(|s| s.contains_key(&oracle.id))
        {
            return Ok(None);
        }
        let sig = oracle.keys.sign(&self.draft(draft).sighash());
        let payload = PartialSignature {
            contract_id: self.id.clone(),
            oracle_id: oracle.id.clone(),
            draft,
            signature: sig,
        }
        .to_bytes();
        Ok(Some(BusMessage::mine(payload, self.pow_difficulty)))
    }

    /// Accepts a bus message carrying a partial signature. Messages without
    /// enough work are dropped with `InvalidPoW`.
    pub fn receive(
        &mut self,
        msg: &BusMessage,
        verifier: &dyn SignatureVerifier,
    ) -> Result<Draft, OrisiError> {
        if !msg.verify(self.pow_difficulty) {
            return Err(OrisiError::InvalidPoW(self.pow_difficulty));
        }
        let partial = PartialSignature::from_bytes(&msg.payload)
            .map_err(|e| OrisiError::BadMessage(e.to_string()))?;
        if partial.contract_id != self.id {
            return Err(OrisiError::BadMessage("wrong contract".into()));
        }
        let oracle = self.oracle(&partial.oracle_id)?.clone();
        let digest = self.draft(partial.draft).sighash();
        if !verifier
            .verify(&partial.signature, &oracle.public, &digest)
            .unwrap_or(false)
        {
            return Err(OrisiError::BadMessage("signature does not verify".into()));
        }
        self.partials
            .entry(partial.draft)
            .or_default()
            .insert(oracle.id, partial.signature);
        Ok(partial.draft)
    }

    pub fn signatures_on(&self, draft: Draft) -> usize {
        self.partials.get(&draft).map_or(0, |s| s.len())
    }

    /// The beneficiary adds the agent-key signatures to the collected oracle
    /// signatures and gets the spend back for broadcast.
    pub fn finalize(
        &mut self,
        draft: Draft,
        agent_keys: &[KeyPair],
    ) -> Result<Transaction, OrisiError> {
        if self.state != ContractState::Active {
            return Err(OrisiError::WrongState(self.state));
        }
        let oracle_sigs: Vec<Signature> = self
            .partials
            .get(&draft)
            .map(|s| s.values().copied().collect())
            .unwrap_or_default();
        if oracle_sigs.len() < self.params.m {
            return Err(OrisiError::QuorumNotReached {
                have: oracle_sigs.len(),
                need: self.params.m,
            });
        }
        let mut tx = self.draft(draft).clone();
        let digest = tx.sighash();
        let agent_sigs: Vec<Signature> = agent_keys
            .iter()
            .filter(|k| self.agent_pubs.contains(&k.public))
            .map(|k| k.sign(&digest))
            .collect();
        let have = oracle_sigs.len() + agent_sigs.len();
        if have < self.params.threshold {
            return Err(OrisiError::QuorumNotReached {
                have,
                need: self.params.threshold,
            });
        }
        tx.inputs[0].witness.signatures = oracle_sigs;
        tx.inputs[0].witness.signatures.extend(agent_sigs);
        self.state = match draft {
            Draft::Unlock => ContractState::Settled,
            Draft::Refund => ContractState::Refunded,
        };
        Ok(tx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSignature {
    pub contract_id: String,
    pub oracle_id: String,
    pub draft: Draft,
    pub signature: Signature,
}

impl PartialSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.str(&self.contract_id)
            .str(&self.oracle_id)
            .u8(self.draft.tag())
            .digest(&self.signature.signer.0)
            .digest(&self.signature.digest)
            .digest(&self.signature.tag);
        e.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(b);
        let contract_id = d.str()?;
        let oracle_id = d.str()?;
        let tag = d.u8()?;
        let draft = Draft::from_tag(tag).ok_or(DecodeError::BadTag { what: "draft", tag })?;
        let signature = Signature {
            signer: PubKey(d.digest()?),
            digest: d.digest()?,
            tag: d.digest()?,
        };
        d.finish()?;
        Ok(PartialSignature {
            contract_id,
            oracle_id,
            draft,
            signature,
        })
    }
}

/// A bus message: `H(payload || nonce)` must start with `difficulty` zero
/// bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusMessage {
    #[serde(with = "hex::serde")]
    pub payload: Vec<u8>,
    pub nonce: u64,
    pub difficulty: u32,
}

impl BusMessage {
    pub fn work_digest(payload: &[u8], nonce: u64) -> Digest {
        sha256_concat(&[payload, &nonce.to_le_bytes()])
    }

    /// Searches nonces upward from zero.
    pub fn mine(payload: Vec<u8>, difficulty: u32) -> Self {
        let nonce = (0u64..)
            .find(|n| Self::work_digest(&payload, *n).leading_zero_bits() >= difficulty)
            .expect("search space is effectively unbounded");
        BusMessage {
            payload,
            nonce,
            difficulty,
        }
    }

    /// Checks the work against the receiver's required difficulty, not the
    /// sender's claim.
    pub fn verify(&self, required: u32) -> bool {
        Self::work_digest(&self.payload, self.nonce).leading_zero_bits() >= required
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(&self.payload).u64(self.nonce).u32(self.difficulty);
        e.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(b);
        let m = BusMessage {
            payload: d.bytes()?,
            nonce: d.u64()?,
            difficulty: d.u32()?,
        };
        d.finish()?;
        Ok(m)
    }
}

/// Ordered in-memory queue standing in for Bitmessage.
#[derive(Debug, Clone, Default)]
pub struct MessageBus {
    queue: VecDeque<BusMessage>,
}

impl MessageBus {
    pub fn publish(&mut self, msg: BusMessage) {
        self.queue.push_back(msg);
    }

    pub fn drain(&mut self) -> impl Iterator<Item = BusMessage> + '_ {
        self.queue.drain(..)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}
