//! Reality Keys: a fact registry that publishes a yes key and a no key per
//! question, posts the automated result, accepts paid objections during a
//! window, then releases exactly one private key and destroys the other.
//!
//! The `demo_*` functions reproduce the two-party contract flow: both
//! parties fund temporary addresses, Alice drafts the transaction moving
//! both into a P2SH locked by `(alice ∧ yes) ∨ (bob ∧ no)`, Bob rebuilds it
//! independently before countersigning, and the winner later spends with
//! their own key plus the released fact key.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datafeed::{Comparator, EpochSeconds, FeedError, FeedSet};
use crate::simchain::wallet::{sign_input, spend_p2sh};
use crate::simchain::{
    keygen, p2sh_lock, Amount, KeyPair, KeyRegistry, LockScript, OutPoint, PubKey, SecretKey,
    Transaction, TxOut, UtxoSet,
};

pub const DEFAULT_OBJECTION_WINDOW: EpochSeconds = 86_400;
/// 10 mBTC.
pub const MIN_OBJECTION_TIP: Amount = 1_000_000;

pub type FactId = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RealityKeysError {
    #[error("resolution time {resolution} is not after now ({now})")]
    PastResolution {
        resolution: EpochSeconds,
        now: EpochSeconds,
    },
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("unknown fact {0}")]
    UnknownFact(FactId),
    #[error("too early")]
    TooEarly,
    #[error("operation not allowed in state {0:?}")]
    WrongState(FactState),
    #[error("tip {0} below the 10 mBTC minimum")]
    TipTooSmall(Amount),
    #[error("objection window closed")]
    WindowClosed,
    #[error(transparent)]
    Feed(#[from] FeedError),
    #[error("feed value is not comparable with the fact's comparator")]
    Incomparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Yes,
    No,
}

impl Outcome {
    pub fn other(self) -> Outcome {
        match self {
            Outcome::Yes => Outcome::No,
            Outcome::No => Outcome::Yes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactState {
    Registered,
    ResultPosted,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub source_id: String,
    pub key: String,
    pub comparator: Comparator,
    pub threshold: f64,
}

/// Public view of a fact. Secrets live in the registry, never here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub id: FactId,
    pub question: String,
    pub resolution_time: EpochSeconds,
    pub source_ref: SourceRef,
    pub yes_pub: PubKey,
    pub no_pub: PubKey,
    pub state: FactState,
    pub posted_result: Option<Outcome>,
    pub objection_window: EpochSeconds,
    pub objection_deadline: Option<EpochSeconds>,
    pub human_override: Option<Outcome>,
    pub tips_collected: Amount,
    pub released: Option<Outcome>,
}

impl Fact {
    pub fn pub_for(&self, outcome: Outcome) -> PubKey {
        match outcome {
            Outcome::Yes => self.yes_pub,
            Outcome::No => self.no_pub,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SecretError {
    #[error("key not released yet")]
    NotReleased,
    #[error("key was destroyed")]
    Destroyed,
}

#[derive(Debug, Clone, Default)]
struct Secrets {
    yes: Option<SecretKey>,
    no: Option<SecretKey>,
}

impl Secrets {
    fn slot(&mut self, o: Outcome) -> &mut Option<SecretKey> {
        match o {
            Outcome::Yes => &mut self.yes,
            Outcome::No => &mut self.no,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Release {
    pub fact_id: FactId,
    pub outcome: Outcome,
    pub secret: SecretKey,
}

#[derive(Debug, Clone)]
pub struct Registry {
    seed: String,
    facts: BTreeMap<FactId, Fact>,
    secrets: BTreeMap<FactId, Secrets>,
    releases: Vec<Release>,
    next_id: FactId,
    pub objection_window: EpochSeconds,
}

impl Registry {
    /// `seed` namespaces the deterministic key derivation.
    pub fn new(seed: impl Into<String>) -> Self {
        Registry {
            seed: seed.into(),
            facts: BTreeMap::new(),
            secrets: BTreeMap::new(),
            releases: vec![],
            next_id: 1,
            objection_window: DEFAULT_OBJECTION_WINDOW,
        }
    }

    pub fn fact(&self, id: FactId) -> Result<&Fact, RealityKeysError> {
        self.facts.get(&id).ok_or(RealityKeysError::UnknownFact(id))
    }

    fn fact_mut(&mut self, id: FactId) -> Result<&mut Fact, RealityKeysError> {
        self.facts
            .get_mut(&id)
            .ok_or(RealityKeysError::UnknownFact(id))
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.values()
    }

    /// Every key release so far, in order.
    pub fn releases(&self) -> &[Release] {
        &self.releases
    }

    /// Creates both key pairs and publishes their public halves. The
    /// verifier learns the secrets so it can check signatures made later
    /// with a released key.
    pub fn register_fact(
        &mut self,
        question: impl Into<String>,
        resolution_time: EpochSeconds,
        source_ref: SourceRef,
        now: EpochSeconds,
        feeds: &FeedSet,
        verifier: &mut KeyRegistry,
    ) -> Result<Fact, RealityKeysError> {
        if resolution_time <= now {
            return Err(RealityKeysError::PastResolution {
                resolution: resolution_time,
                now,
            });
        }
        if feeds.get(&source_ref.source_id).is_err() {
            return Err(RealityKeysError::UnknownSource(source_ref.source_id));
        }
        let id = self.next_id;
        self.next_id += 1;
        let derive = |label: &str| {
            keygen(format!("realitykeys/{}/{id}/{label}", self.seed).as_bytes())
                .expect("nonempty seed")
        };
        let yes = derive("yes");
        let no = derive("no");
        verifier.register(&yes);
        verifier.register(&no);
        let fact = Fact {
            id,
            question: question.into(),
            resolution_time,
            source_ref,
            yes_pub: yes.public,
            no_pub: no.public,
            state: FactState::Registered,
            posted_result: None,
            objection_window: self.objection_window,
            objection_deadline: None,
            human_override: None,
            tips_collected: 0,
            released: None,
        };
        self.facts.insert(id, fact.clone());
        self.secrets.insert(
            id,
            Secrets {
                yes: Some(yes.secret),
                no: Some(no.secret),
            },
        );
        Ok(fact)
    }

    /// Publishes the automated result (not a key) and opens the objection
    /// window. The source is read at the fact's resolution time.
    pub fn post_result(
        &mut self,
        id: FactId,
        now: EpochSeconds,
        feeds: &FeedSet,
    ) -> Result<Outcome, RealityKeysError> {
        let fact = self.fact(id)?;
        if fact.state != FactState::Registered {
            return Err(RealityKeysError::WrongState(fact.state));
        }
        if now < fact.resolution_time {
            return Err(RealityKeysError::TooEarly);
        }
        let r = &fact.source_ref;
        let obs = feeds.query(&r.source_id, &r.key, fact.resolution_time)?;
        let comparable = match r.comparator {
            Comparator::EventTrue => obs.value.as_bool().is_some(),
            _ => obs.value.as_number().is_some(),
        };
        if !comparable {
            return Err(RealityKeysError::Incomparable);
        }
        let outcome = if r.comparator.eval(&obs.value, r.threshold) {
            Outcome::Yes
        } else {
            Outcome::No
        };
        let fact = self.fact_mut(id)?;
        fact.posted_result = Some(outcome);
        fact.objection_deadline = Some(now + fact.objection_window);
        fact.state = FactState::ResultPosted;
        Ok(outcome)
    }

    /// A paid request for a human check. `verdict` is the scripted outcome
    /// of that check; it overrides the automated result at finalization.
    /// The tip is kept by the operator.
    pub fn object(
        &mut self,
        id: FactId,
        tip: Amount,
        verdict: Outcome,
        now: EpochSeconds,
    ) -> Result<(), RealityKeysError> {
        let fact = self.fact_mut(id)?;
        if fact.state != FactState::ResultPosted {
            return Err(RealityKeysError::WrongState(fact.state));
        }
        if now >= fact.objection_deadline.expect("set when posted") {
            return Err(RealityKeysError::WindowClosed);
        }
        if tip < MIN_OBJECTION_TIP {
            return Err(RealityKeysError::TipTooSmall(tip));
        }
        fact.tips_collected += tip;
        fact.human_override = Some(verdict);
        Ok(())
    }

    /// Releases the winning key and destroys the losing one. Idempotent.
    pub fn finalize(
        &mut self,
        id: FactId,
        now: EpochSeconds,
    ) -> Result<SecretKey, RealityKeysError> {
        let fact = self.fact(id)?;
        match fact.state {
            FactState::Finalized => {
                let outcome = fact.released.expect("finalized facts have a release");
                return self
                    .query_secret(id, outcome)
                    .map_err(|_| RealityKeysError::WrongState(FactState::Finalized));
            }
            FactState::Registered => return Err(RealityKeysError::TooEarly),
            FactState::ResultPosted => {}
        }
        if now < fact.objection_deadline.expect("set when posted") {
            return Err(RealityKeysError::TooEarly);
        }
        let winner = fact
            .human_override
            .or(fact.posted_result)
            .expect("posted facts have a result");
        let secrets = self.secrets.get_mut(&id).expect("created with the fact");
        let secret = secrets.slot(winner).expect("not yet released");
        *secrets.slot(winner.other()) = None;
        let fact = self.fact_mut(id)?;
        fact.state = FactState::Finalized;
        fact.released = Some(winner);
        self.releases.push(Release {
            fact_id: id,
            outcome: winner,
            secret,
        });
        Ok(secret)
    }

    /// What the outside world can learn about one key of a fact.
    pub fn query_secret(&self, id: FactId, outcome: Outcome) -> Result<SecretKey, SecretError> {
        let fact = self.facts.get(&id).ok_or(SecretError::NotReleased)?;
        match fact.released {
            Some(o) if o == outcome => Ok(self.secrets[&id].clone().slot(o).expect("kept")),
            Some(_) => Err(SecretError::Destroyed),
            None => Err(SecretError::NotReleased),
        }
    }

    pub fn released(&self, id: FactId) -> Option<(Outcome, SecretKey)> {
        let o = self.facts.get(&id)?.released?;
        self.query_secret(id, o).ok().map(|s| (o, s))
    }

    pub fn export_json(&self) -> serde_json::Value {
        serde_json::json!({
            "facts": self.facts.values().collect::<Vec<_>>(),
            "releases": self.releases,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemoError {
    #[error("temporary address {0:?} is not funded with the agreed stake")]
    TempNotFunded(OutPoint),
    #[error("independently rebuilt transaction differs from the one received")]
    ReconstructionMismatch,
    #[error("fact has not been finalized")]
    NotFinalized,
    #[error("claimant does not own the branch matching the released key")]
    WrongBranch,
    #[error("temporary address already spent into the contract")]
    AlreadyCommitted,
}

/// `./realitykeysdemo.py makekeys`: a fresh key pair whose pay-to-key
/// address serves as the party's temporary address.
pub fn demo_makekeys(seed: &str) -> KeyPair {
    keygen(format!("realitykeys-demo/{seed}").as_bytes()).expect("nonempty")
}

/// Everything both parties agree on before the setup transaction exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTerms {
    pub fact_id: FactId,
    pub yes_pub: PubKey,
    pub no_pub: PubKey,
    pub alice_pub: PubKey,
    pub bob_pub: PubKey,
    pub alice_temp: OutPoint,
    pub bob_temp: OutPoint,
    pub alice_stake: Amount,
    pub bob_stake: Amount,
    pub fee: Amount,
}

impl DemoTerms {
    pub fn redeem(&self) -> LockScript {
        LockScript::either(
            LockScript::multisig(2, vec![self.alice_pub, self.yes_pub]).expect("2-of-2"),
            LockScript::multisig(2, vec![self.bob_pub, self.no_pub]).expect("2-of-2"),
        )
    }

    pub fn unsigned_setup(&self) -> Transaction {
        let lock = p2sh_lock(&self.redeem()).expect("template redeem");
        Transaction::spending(
            &[self.alice_temp, self.bob_temp],
            vec![TxOut::new(
                self.alice_stake + self.bob_stake - self.fee,
                lock,
            )],
            0,
        )
    }

    fn check_funded(&self, utxo: &UtxoSet) -> Result<(), DemoError> {
        for (op, stake, owner) in [
            (self.alice_temp, self.alice_stake, self.alice_pub),
            (self.bob_temp, self.bob_stake, self.bob_pub),
        ] {
            match utxo.get(&op) {
                Some(c)
                    if c.output.value == stake
                        && c.output.lock == LockScript::pay_to_key(owner) => {}
                _ => return Err(DemoError::TempNotFunded(op)),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoContract {
    pub terms: DemoTerms,
    pub redeem: LockScript,
    pub p2sh_lock: LockScript,
    pub outpoint: OutPoint,
    pub value: Amount,
}

/// Alice drafts the setup transaction and signs her input.
pub fn demo_setup(
    utxo: &UtxoSet,
    terms: &DemoTerms,
    alice: &KeyPair,
) -> Result<Transaction, DemoError> {
    terms.check_funded(utxo)?;
    let mut tx = terms.unsigned_setup();
    sign_input(&mut tx, 0, alice);
    Ok(tx)
}

/// Bob rebuilds the transaction from his own copy of the terms and signs
/// only if it is byte-identical to Alice's draft.
pub fn demo_countersign(
    utxo: &UtxoSet,
    bob_terms: &DemoTerms,
    bob: &KeyPair,
    partial: &Transaction,
) -> Result<(Transaction, DemoContract), DemoError> {
    bob_terms.check_funded(utxo)?;
    let rebuilt = bob_terms.unsigned_setup();
    let mut stripped = partial.clone();
    for i in &mut stripped.inputs {
        i.witness = Default::default();
    }
    if stripped.to_bytes() != rebuilt.to_bytes() {
        return Err(DemoError::ReconstructionMismatch);
    }
    let mut tx = partial.clone();
    sign_input(&mut tx, 1, bob);
    let contract = DemoContract {
        terms: bob_terms.clone(),
        redeem: bob_terms.redeem(),
        p2sh_lock: tx.outputs[0].lock.clone(),
        outpoint: tx.outpoint(0),
        value: tx.outputs[0].value,
    };
    Ok((tx, contract))
}

/// The winner spends the P2SH with their own key and the released fact key.
pub fn demo_claim(
    contract: &DemoContract,
    registry: &Registry,
    winner: &KeyPair,
    dest: PubKey,
    fee: Amount,
) -> Result<Transaction, DemoError> {
    let (outcome, secret) = registry
        .released(contract.terms.fact_id)
        .ok_or(DemoError::NotFinalized)?;
    let branch = if winner.public == contract.terms.alice_pub {
        Outcome::Yes
    } else if winner.public == contract.terms.bob_pub {
        Outcome::No
    } else {
        return Err(DemoError::WrongBranch);
    };
    if branch != outcome {
        return Err(DemoError::WrongBranch);
    }
    let fact_key = KeyPair::from_secret(secret);
    let mut tx = Transaction::spending(
        &[contract.outpoint],
        vec![TxOut::to_key(contract.value - fee, dest)],
        0,
    );
    let h = tx.sighash();
    tx.inputs[0] = spend_p2sh(
        contract.outpoint,
        contract.redeem.clone(),
        vec![winner.sign(&h), fact_key.sign(&h)],
    );
    Ok(tx)
}

/// Either party can pull their stake back from the temporary address until
/// the setup transaction has consumed it.
pub fn demo_refund(
    utxo: &UtxoSet,
    party: &KeyPair,
    temp: OutPoint,
    dest: PubKey,
    fee: Amount,
) -> Result<Transaction, DemoError> {
    let coin = match utxo.get(&temp) {
        Some(c) => c,
        None if utxo.is_spent(&temp) => return Err(DemoError::AlreadyCommitted),
        None => return Err(DemoError::TempNotFunded(temp)),
    };
    let mut tx = Transaction::spending(
        &[temp],
        vec![TxOut::to_key(coin.output.value - fee, dest)],
        0,
    );
    sign_input(&mut tx, 0, party);
    Ok(tx)
}
