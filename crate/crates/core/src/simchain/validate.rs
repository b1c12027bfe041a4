use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Amount, Digest, LockScript, OutPoint, PubKey, SignatureVerifier, Transaction, TxOut, Witness,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum TxError {
    #[error("input references an output that never existed")]
    MissingInput,
    #[error("input references an output that is already spent")]
    DoubleSpend,
    #[error("witness does not satisfy the lock")]
    BadWitness,
    #[error("outputs exceed inputs")]
    Overspend,
    #[error("time lock not yet reached")]
    Premature,
    #[error("data-carrier outputs cannot be spent")]
    UnspendableInput,
    #[error("output lock violates template invariants")]
    MalformedScript,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coin {
    pub output: TxOut,
    pub height: u64,
}

/// Unspent outputs plus the record of everything already spent, so that a
/// second spend can be told apart from a reference to nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtxoSet {
    coins: BTreeMap<OutPoint, Coin>,
    spent: BTreeSet<OutPoint>,
}

impl UtxoSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, op: &OutPoint) -> Option<&Coin> {
        self.coins.get(op)
    }

    pub fn is_spent(&self, op: &OutPoint) -> bool {
        self.spent.contains(op)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutPoint, &Coin)> {
        self.coins.iter()
    }

    pub fn len(&self) -> usize {
        self.coins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coins.is_empty()
    }

    /// Removes spent inputs and adds the new outputs. Does not validate.
    pub fn apply(&mut self, tx: &Transaction, height: u64) {
        for input in &tx.inputs {
            self.coins.remove(&input.outpoint);
            self.spent.insert(input.outpoint);
        }
        let txid = tx.txid();
        for (i, out) in tx.outputs.iter().enumerate() {
            self.coins.insert(
                OutPoint::new(txid, i as u32),
                Coin {
                    output: out.clone(),
                    height,
                },
            );
        }
    }

    /// Spendable value locked to a single key.
    pub fn balance_of(&self, key: &PubKey) -> Amount {
        self.coins_of(key).map(|(_, c)| c.output.value).sum()
    }

    pub fn coins_of<'a>(
        &'a self,
        key: &'a PubKey,
    ) -> impl Iterator<Item = (&'a OutPoint, &'a Coin)> + 'a {
        self.coins.iter().filter(
            move |(_, c)| matches!(&c.output.lock, LockScript::PayToKey { key: k } if k == key),
        )
    }

    /// Value held in outputs that can never be spent again.
    pub fn unspendable_value(&self) -> Amount {
        self.coins
            .values()
            .filter(|c| c.output.lock.is_unspendable())
            .map(|c| c.output.value)
            .sum()
    }

    pub fn total_value(&self) -> Amount {
        self.coins.values().map(|c| c.output.value).sum()
    }
}

/// Checks `tx` against the UTXO set for inclusion in a block at `height`.
/// Returns the fee on success.
pub fn validate_tx(
    tx: &Transaction,
    utxo: &UtxoSet,
    keys: &dyn SignatureVerifier,
    height: u64,
) -> Result<Amount, TxError> {
    if tx.inputs.is_empty() {
        return Err(TxError::MissingInput);
    }
    for out in &tx.outputs {
        out.lock
            .check_structure()
            .map_err(|_| TxError::MalformedScript)?;
    }
    let sighash = tx.sighash();
    let mut seen = BTreeSet::new();
    let mut input_value: u128 = 0;
    for input in &tx.inputs {
        if !seen.insert(input.outpoint) {
            return Err(TxError::DoubleSpend);
        }
        let coin = match utxo.get(&input.outpoint) {
            Some(c) => c,
            None if utxo.is_spent(&input.outpoint) => return Err(TxError::DoubleSpend),
            None => return Err(TxError::MissingInput),
        };
        satisfy(
            &coin.output.lock,
            &input.witness,
            &sighash,
            height,
            keys,
            true,
        )?;
        input_value += coin.output.value as u128;
    }
    if tx.locktime > height {
        return Err(TxError::Premature);
    }
    let output_value: u128 = tx.outputs.iter().map(|o| o.value as u128).sum();
    if output_value > input_value {
        return Err(TxError::Overspend);
    }
    Ok((input_value - output_value) as Amount)
}

fn signed_by(
    witness: &Witness,
    key: &PubKey,
    sighash: &Digest,
    keys: &dyn SignatureVerifier,
) -> bool {
    witness
        .signatures
        .iter()
        .any(|s| s.signer == *key && keys.verify(s, key, sighash).unwrap_or(false))
}

fn count_signers(
    witness: &Witness,
    listed: &[PubKey],
    sighash: &Digest,
    keys: &dyn SignatureVerifier,
) -> usize {
    let distinct: BTreeSet<&PubKey> = listed.iter().collect();
    distinct
        .into_iter()
        .filter(|k| signed_by(witness, k, sighash, keys))
        .count()
}

/// Checks one witness against one lock. `allow_p2sh` is false inside a
/// redeem script: script-hash locks do not nest.
pub fn satisfy(
    lock: &LockScript,
    witness: &Witness,
    sighash: &Digest,
    height: u64,
    keys: &dyn SignatureVerifier,
    allow_p2sh: bool,
) -> Result<(), TxError> {
    match lock {
        LockScript::PayToKey { key } => {
            if signed_by(witness, key, sighash, keys) {
                Ok(())
            } else {
                Err(TxError::BadWitness)
            }
        }
        LockScript::MultiSig {
            required,
            keys: listed,
        } => {
            if lock.check_structure().is_ok()
                && count_signers(witness, listed, sighash, keys) >= *required as usize
            {
                Ok(())
            } else {
                Err(TxError::BadWitness)
            }
        }
        LockScript::HashGatedMultiSig {
            required,
            keys: listed,
            commitment,
        } => {
            let preimage_ok = witness
                .expr_preimage
                .as_deref()
                .is_some_and(|p| super::sha256(p) == *commitment);
            if preimage_ok
                && lock.check_structure().is_ok()
                && count_signers(witness, listed, sighash, keys) >= *required as usize
            {
                Ok(())
            } else {
                Err(TxError::BadWitness)
            }
        }
        LockScript::ScriptHash { hash } => {
            let redeem = witness.redeem.as_ref().ok_or(TxError::BadWitness)?;
            if !allow_p2sh || redeem.is_unspendable() || redeem.script_hash() != *hash {
                return Err(TxError::BadWitness);
            }
            satisfy(redeem, witness, sighash, height, keys, false)
        }
        LockScript::DataCarrier { .. } => Err(TxError::UnspendableInput),
        LockScript::TimeLocked {
            unlock_height,
            inner,
        } => {
            if height < *unlock_height {
                return Err(TxError::Premature);
            }
            satisfy(inner, witness, sighash, height, keys, allow_p2sh)
        }
        LockScript::Either { left, right } => {
            let l = satisfy(left, witness, sighash, height, keys, allow_p2sh);
            if l.is_ok() {
                return l;
            }
            let r = satisfy(right, witness, sighash, height, keys, allow_p2sh);
            match (l, r) {
                (_, Ok(())) => Ok(()),
                (Err(TxError::Premature), Err(TxError::Premature)) => Err(TxError::Premature),
                _ => Err(TxError::BadWitness),
            }
        }
    }
}
