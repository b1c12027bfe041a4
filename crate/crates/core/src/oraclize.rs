//! Oraclize-style conditional transactions.
//!
//! Alice and Bob fund a 2-of-3 multisig with the oracle as third key. The
//! oracle polls its data sources on a fixed schedule, and on the first true
//! condition signs a settlement to that condition's beneficiary, who adds
//! the second signature. Every fetch carries an authenticity proof; with
//! ProofShield on the oracle verifies it before signing, otherwise the
//! failure is only visible in the audit log. If nothing matches within the
//! timeframe the oracle pays the default beneficiary, and if the oracle
//! disappears the pre-signed nLockTime refund returns the stakes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datafeed::{
    verify_proof, Attestor, AuthenticityProof, Comparator, EpochSeconds, FeedError, FeedSet,
    Observation,
};
use crate::simchain::wallet::{build_joint_payment, sign_input, WalletError};
use crate::simchain::{
    satisfy, Amount, KeyPair, LockScript, OutPoint, PubKey, SignatureVerifier, Transaction,
    TxError, TxOut, UtxoSet,
};

pub const DEFAULT_POLL_INTERVAL: EpochSeconds = 3_600;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OraclizeError {
    #[error("conditions {0} and {1} can both hold for the same value")]
    OverlappingConditions(usize, usize),
    #[error("data source {0:?} is not served over SSL")]
    NonSSLSource(String),
    #[error("timeframe is empty or poll interval is not positive")]
    EmptyTimeframe,
    #[error("at least one condition is required")]
    NoConditions,
    #[error("authenticity proof failed verification")]
    ProofInvalid,
    #[error(transparent)]
    Feed(#[from] FeedError),
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("too early")]
    TooEarly,
    #[error("contract already settled")]
    AlreadySettled,
    #[error("{0} is not a poll time")]
    OffSchedule(EpochSeconds),
    #[error("signer does not hold the contract's third key")]
    WrongSigner,
    #[error("settlement witness invalid: {0}")]
    BadWitness(TxError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub source_id: String,
    pub key: String,
    pub comparator: Comparator,
    #[serde(default)]
    pub threshold: f64,
    pub beneficiary: PubKey,
}

/// The set of values satisfying a numeric comparison, as an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Interval {
    lo: f64,
    lo_closed: bool,
    hi: f64,
    hi_closed: bool,
}

fn interval(op: Comparator, t: f64) -> Interval {
    let inf = f64::INFINITY;
    let (lo, lo_closed, hi, hi_closed) = match op {
        Comparator::Lt => (-inf, false, t, false),
        Comparator::Le => (-inf, false, t, true),
        Comparator::Eq => (t, true, t, true),
        Comparator::Ge => (t, true, inf, false),
        Comparator::Gt => (t, false, inf, false),
        Comparator::EventTrue => unreachable!("not numeric"),
    };
    Interval {
        lo,
        lo_closed,
        hi,
        hi_closed,
    }
}

fn intersects(a: Interval, b: Interval) -> bool {
    let (lo, lo_closed) = match a.lo.total_cmp(&b.lo) {
        std::cmp::Ordering::Greater => (a.lo, a.lo_closed),
        std::cmp::Ordering::Less => (b.lo, b.lo_closed),
        std::cmp::Ordering::Equal => (a.lo, a.lo_closed && b.lo_closed),
    };
    let (hi, hi_closed) = match a.hi.total_cmp(&b.hi) {
        std::cmp::Ordering::Less => (a.hi, a.hi_closed),
        std::cmp::Ordering::Greater => (b.hi, b.hi_closed),
        std::cmp::Ordering::Equal => (a.hi, a.hi_closed && b.hi_closed),
    };
    lo < hi || (lo == hi && lo_closed && hi_closed)
}

/// Whether some single observation can satisfy both conditions. Conditions
/// on different (source, key) pairs never overlap; an event flag and a
/// numeric comparison read different value types.
pub fn conditions_overlap(a: &Condition, b: &Condition) -> bool {
    if a.source_id != b.source_id || a.key != b.key {
        return false;
    }
    match (a.comparator, b.comparator) {
        (Comparator::EventTrue, Comparator::EventTrue) => true,
        (Comparator::EventTrue, _) | (_, Comparator::EventTrue) => false,
        (x, y) => intersects(interval(x, a.threshold), interval(y, b.threshold)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub alice: PubKey,
    pub bob: PubKey,
    pub oracle: PubKey,
    /// Replaces the oracle in the 2-of-3 when present.
    #[serde(default)]
    pub arbitrator: Option<PubKey>,
    pub conditions: Vec<Condition>,
    pub default_beneficiary: PubKey,
    pub start: EpochSeconds,
    pub end: EpochSeconds,
    #[serde(default = "default_interval")]
    pub poll_interval: EpochSeconds,
    pub refund_locktime: u64,
    pub proofshield: bool,
    pub alice_stake: Amount,
    pub bob_stake: Amount,
    /// Miner fee paid by each funder and by each settlement.
    pub fee: Amount,
}

fn default_interval() -> EpochSeconds {
    DEFAULT_POLL_INTERVAL
}

impl ContractSpec {
    /// Key that co-signs settlements with the beneficiary.
    pub fn third_key(&self) -> PubKey {
        self.arbitrator.unwrap_or(self.oracle)
    }

    pub fn lock(&self) -> LockScript {
        LockScript::multisig(2, vec![self.alice, self.bob, self.third_key()]).expect("2-of-3")
    }

    pub fn poll_times(&self) -> impl Iterator<Item = EpochSeconds> + '_ {
        (0..)
            .map(|k| self.start + k * self.poll_interval)
            .take_while(|t| *t < self.end)
    }

    fn check(&self, feeds: &FeedSet) -> Result<(), OraclizeError> {
        if self.end <= self.start || self.poll_interval <= 0 {
            return Err(OraclizeError::EmptyTimeframe);
        }
        if self.conditions.is_empty() {
            return Err(OraclizeError::NoConditions);
        }
        for c in &self.conditions {
            if !feeds.get(&c.source_id)?.ssl {
                return Err(OraclizeError::NonSSLSource(c.source_id.clone()));
            }
        }
        for i in 0..self.conditions.len() {
            for j in i + 1..self.conditions.len() {
                if conditions_overlap(&self.conditions[i], &self.conditions[j]) {
                    return Err(OraclizeError::OverlappingConditions(i, j));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ContractState {
    Active,
    SettledCondition { index: usize },
    SettledDefault,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedSettlement {
    pub tx: Transaction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proof: Option<AuthenticityProof>,
    pub verified_before_signing: bool,
    pub proof_valid: bool,
}

/// One line of the oracle's audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub time: EpochSeconds,
    pub condition: usize,
    pub observation: Observation,
    pub proof: AuthenticityProof,
    pub verified_before_signing: bool,
    pub proof_valid: bool,
    pub signed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalContract {
    pub spec: ContractSpec,
    pub funding: OutPoint,
    pub amount: Amount,
    /// Pays both stakes back; signed by Alice and Bob, valid from
    /// `refund_locktime`.
    pub refund: Transaction,
    pub state: ContractState,
    pub audit: Vec<AuditRecord>,
}

/// Validates the contract terms, funds the 2-of-3 and pre-signs the refund. Returns
/// the funding transaction for broadcast.
pub fn build_contract(
    utxo: &UtxoSet,
    spec: ContractSpec,
    alice: &KeyPair,
    bob: &KeyPair,
    feeds: &FeedSet,
    reserved: &BTreeSet<OutPoint>,
) -> Result<(ConditionalContract, Transaction), OraclizeError> {
    spec.check(feeds)?;
    let amount = spec.alice_stake + spec.bob_stake;
    let funding_tx = build_joint_payment(
        utxo,
        &[(alice, spec.alice_stake), (bob, spec.bob_stake)],
        vec![TxOut::new(amount, spec.lock())],
        spec.fee,
        reserved,
    )?;
    let funding = OutPoint::new(funding_tx.txid(), 0);
    let half = spec.fee / 2;
    let mut refund = Transaction::spending(
        &[funding],
        vec![
            TxOut::to_key(spec.alice_stake - half, spec.alice),
            TxOut::to_key(spec.bob_stake - (spec.fee - half), spec.bob),
        ],
        spec.refund_locktime,
    );
    sign_input(&mut refund, 0, alice);
    sign_input(&mut refund, 0, bob);
    Ok((
        ConditionalContract {
            spec,
            funding,
            amount,
            refund,
            state: ContractState::Active,
            audit: vec![],
        },
        funding_tx,
    ))
}

impl ConditionalContract {
    fn payout(&self, to: PubKey) -> Transaction {
        Transaction::spending(
            &[self.funding],
            vec![TxOut::to_key(self.amount - self.spec.fee, to)],
            0,
        )
    }

    fn require_active(&self) -> Result<(), OraclizeError> {
        if self.state != ContractState::Active {
            return Err(OraclizeError::AlreadySettled);
        }
        Ok(())
    }

    fn require_signer(&self, signer: &KeyPair) -> Result<(), OraclizeError> {
        if signer.public != self.spec.third_key() {
            return Err(OraclizeError::WrongSigner);
        }
        Ok(())
    }

    /// One scheduled check. Conditions are tried in list order and the
    /// first true one settles.
    pub fn poll(
        &mut self,
        now: EpochSeconds,
        feeds: &FeedSet,
        attestor: &dyn Attestor,
        signer: &KeyPair,
    ) -> Result<Option<SignedSettlement>, OraclizeError> {
        self.require_active()?;
        self.require_signer(signer)?;
        let s = &self.spec;
        if now < s.start || now >= s.end || (now - s.start) % s.poll_interval != 0 {
            return Err(OraclizeError::OffSchedule(now));
        }
        let mut hit = None;
        for (i, c) in s.conditions.iter().enumerate() {
            let obs = feeds.query(&c.source_id, &c.key, now)?;
            if c.comparator.eval(&obs.value, c.threshold) {
                hit = Some((i, obs));
                break;
            }
        }
        let Some((i, obs)) = hit else {
            return Ok(None);
        };
        let proof = attestor.attest(&obs);
        let valid = verify_proof(&proof, &obs, attestor.id());
        let shield = s.proofshield;
        let signed = valid || !shield;
        self.audit.push(AuditRecord {
            time: now,
            condition: i,
            observation: obs.clone(),
            proof: proof.clone(),
            verified_before_signing: shield,
            proof_valid: valid,
            signed,
        });
        if !signed {
            return Err(OraclizeError::ProofInvalid);
        }
        let mut tx = self.payout(s.conditions[i].beneficiary);
        sign_input(&mut tx, 0, signer);
        self.state = ContractState::SettledCondition { index: i };
        Ok(Some(SignedSettlement {
            tx,
            condition: Some(i),
            observation: Some(obs),
            proof: Some(proof),
            verified_before_signing: shield,
            proof_valid: valid,
        }))
    }

    /// After the timeframe with no match, the oracle pays the default
    /// beneficiary.
    pub fn settle_default(
        &mut self,
        now: EpochSeconds,
        signer: &KeyPair,
    ) -> Result<SignedSettlement, OraclizeError> {
        self.require_active()?;
        self.require_signer(signer)?;
        if now < self.spec.end {
            return Err(OraclizeError::TooEarly);
        }
        let mut tx = self.payout(self.spec.default_beneficiary);
        sign_input(&mut tx, 0, signer);
        self.state = ContractState::SettledDefault;
        Ok(SignedSettlement {
            tx,
            condition: None,
            observation: None,
            proof: None,
            verified_before_signing: false,
            proof_valid: false,
        })
    }

    /// The arbitrator's scripted decision in the Carol variant.
    pub fn arbitrate(
        &mut self,
        arbitrator: &KeyPair,
        to: PubKey,
    ) -> Result<SignedSettlement, OraclizeError> {
        self.require_active()?;
        if self.spec.arbitrator != Some(arbitrator.public) {
            return Err(OraclizeError::WrongSigner);
        }
        let mut tx = self.payout(to);
        sign_input(&mut tx, 0, arbitrator);
        self.state = if to == self.spec.default_beneficiary {
            ContractState::SettledDefault
        } else {
            ContractState::SettledCondition {
                index: self
                    .spec
                    .conditions
                    .iter()
                    .position(|c| c.beneficiary == to)
                    .unwrap_or(0),
            }
        };
        Ok(SignedSettlement {
            tx,
            condition: None,
            observation: None,
            proof: None,
            verified_before_signing: false,
            proof_valid: false,
        })
    }

    /// Releases the pre-signed refund once the lock height is reached and
    /// nothing else has settled.
    pub fn refund_expiry(&mut self, height: u64) -> Result<Transaction, OraclizeError> {
        self.require_active()?;
        if height < self.spec.refund_locktime {
            return Err(OraclizeError::TooEarly);
        }
        self.state = ContractState::Refunded;
        Ok(self.refund.clone())
    }

    pub fn audit_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.audit).expect("serializable")
    }
}

/// Adds the agent's signature and checks the 2-of-3 witness.
pub fn co_sign_and_broadcast(
    contract: &ConditionalContract,
    settlement: &SignedSettlement,
    agent: &KeyPair,
    keys: &dyn SignatureVerifier,
) -> Result<Transaction, OraclizeError> {
    let mut tx = settlement.tx.clone();
    sign_input(&mut tx, 0, agent);
    satisfy(
        &contract.spec.lock(),
        &tx.inputs[0].witness,
        &tx.sighash(),
        u64::MAX,
        keys,
        false,
    )
    .map_err(OraclizeError::BadWitness)?;
    Ok(tx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simchain::keygen;

    fn cond(op: Comparator, t: f64) -> Condition {
        Condition {
            source_id: "s".into(),
            key: "k".into(),
            comparator: op,
            threshold: t,
            beneficiary: keygen(b"b").unwrap().public,
        }
    }

    #[test]
    fn overlap_table() {
        use Comparator::*;
        let cases = [
            (Gt, 10.0, Gt, 5.0, true),
            (Gt, 10.0, Le, 10.0, false),
            (Ge, 10.0, Le, 10.0, true),
            (Lt, 10.0, Gt, 10.0, false),
            (Eq, 3.0, Eq, 3.0, true),
            (Eq, 3.0, Eq, 4.0, false),
            (Eq, 3.0, Lt, 3.0, false),
            (Eq, 3.0, Le, 3.0, true),
            (Lt, 1.0, Lt, -50.0, true),
            (EventTrue, 0.0, EventTrue, 0.0, true),
            (EventTrue, 0.0, Gt, 0.0, false),
        ];
        for (a, ta, b, tb, want) in cases {
            assert_eq!(
                conditions_overlap(&cond(a, ta), &cond(b, tb)),
                want,
                "{a:?} {ta} vs {b:?} {tb}"
            );
            assert_eq!(conditions_overlap(&cond(b, tb), &cond(a, ta)), want);
        }
    }

    #[test]
    fn different_keys_never_overlap() {
        let mut a = cond(Comparator::Gt, 0.0);
        let b = cond(Comparator::Gt, 0.0);
        a.key = "other".into();
        assert!(!conditions_overlap(&a, &b));
    }
}
