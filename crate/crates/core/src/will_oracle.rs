//! Single-oracle "will" contract.
//!
//! The creator funds `<oracle> <heir> 2 CHECKMULTISIGVERIFY <hash> OP_TRUE`
//! where `<hash>` commits to a condition expression. The heir later hands
//! the oracle the expression and a partially signed claim; the oracle signs
//! only if the expression hashes to the commitment and evaluates true.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datafeed::{EpochSeconds, FeedError, FeedSet, Value};
use crate::simchain::wallet::{build_payment, sign_input, WalletError};
use crate::simchain::{
    sha256, Amount, Digest, KeyPair, LockScript, OutPoint, PubKey, Signature, Transaction, TxOut,
    UtxoSet,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WillError {
    #[error("condition expression is empty")]
    EmptyExpression,
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("expression does not hash to the committed value")]
    HashMismatch,
    #[error("condition evaluated false")]
    ConditionFalse,
    #[error("condition value is not boolean")]
    NotBoolean,
    #[error(transparent)]
    Feed(#[from] FeedError),
    #[error("transaction does not spend the will output")]
    NotWillSpend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WillContract {
    pub oracle_pub: PubKey,
    pub heir_pub: PubKey,
    pub expr_hash: Digest,
    pub funding_outpoint: OutPoint,
    pub amount: Amount,
}

impl WillContract {
    pub fn lock(&self) -> LockScript {
        will_lock(self.oracle_pub, self.heir_pub, self.expr_hash)
    }
}

pub fn will_lock(oracle: PubKey, heir: PubKey, expr_hash: Digest) -> LockScript {
    LockScript::hash_gated_multisig(2, vec![oracle, heir], expr_hash)
        .expect("2-of-2 is well formed")
}

/// Builds and signs the creator's funding transaction. The oracle is fixed
/// here and cannot change afterwards.
#[allow(clippy::too_many_arguments)]
pub fn create_will(
    utxo: &UtxoSet,
    creator: &KeyPair,
    oracle_pub: PubKey,
    heir_pub: PubKey,
    expression: &str,
    amount: Amount,
    fee: Amount,
    reserved: &BTreeSet<OutPoint>,
) -> Result<(WillContract, Transaction), WillError> {
    if expression.trim().is_empty() {
        return Err(WillError::EmptyExpression);
    }
    let expr_hash = sha256(expression.as_bytes());
    let tx = build_payment(
        utxo,
        creator,
        vec![TxOut::new(
            amount,
            will_lock(oracle_pub, heir_pub, expr_hash),
        )],
        fee,
        reserved,
    )?;
    let contract = WillContract {
        oracle_pub,
        heir_pub,
        expr_hash,
        funding_outpoint: tx.outpoint(0),
        amount,
    };
    Ok((contract, tx))
}

/// A claim paying the will output to `dest`, carrying the expression
/// preimage but no signatures yet.
pub fn claim_draft(
    contract: &WillContract,
    expression: &str,
    dest: PubKey,
    fee: Amount,
) -> Transaction {
    let mut tx = Transaction::spending(
        &[contract.funding_outpoint],
        vec![TxOut::to_key(contract.amount - fee, dest)],
        0,
    );
    tx.inputs[0].witness.expr_preimage = Some(expression.as_bytes().to_vec());
    tx
}

/// The oracle: a keypair plus the source it consults. Its public key is what
/// it would publish on its website.
#[derive(Debug, Clone)]
pub struct OracleServer {
    keys: KeyPair,
    pub source_id: String,
}

impl OracleServer {
    pub fn new(keys: KeyPair, source_id: impl Into<String>) -> Self {
        OracleServer {
            keys,
            source_id: source_id.into(),
        }
    }

    pub fn published_pub(&self) -> PubKey {
        self.keys.public
    }

    /// Signs the partial claim iff the expression matches the committed hash
    /// and the source records it as true at `now`.
    pub fn request_signature(
        &self,
        contract: &WillContract,
        expression: &str,
        partial_tx: &Transaction,
        feeds: &FeedSet,
        now: EpochSeconds,
    ) -> Result<Signature, WillError> {
        if !partial_tx
            .inputs
            .iter()
            .any(|i| i.outpoint == contract.funding_outpoint)
        {
            return Err(WillError::NotWillSpend);
        }
        if sha256(expression.as_bytes()) != contract.expr_hash {
            return Err(WillError::HashMismatch);
        }
        let obs = feeds.query(&self.source_id, expression, now)?;
        match obs.value {
            Value::Bool(true) => Ok(self.keys.sign(&partial_tx.sighash())),
            Value::Bool(false) => Err(WillError::ConditionFalse),
            _ => Err(WillError::NotBoolean),
        }
    }
}

/// Assembles the claim from the heir's keys and the oracle's signature.
/// Validity is left to the chain: a missing or bad signature shows up as
/// `BadWitness` there.
pub fn claim(
    mut partial_tx: Transaction,
    heir: Option<&KeyPair>,
    oracle_sig: Option<Signature>,
) -> Transaction {
    if let Some(heir) = heir {
        sign_input(&mut partial_tx, 0, heir);
    }
    if let Some(sig) = oracle_sig {
        partial_tx.inputs[0].witness.signatures.push(sig);
    }
    partial_tx
}
