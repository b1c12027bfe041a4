//! Coin selection and signing helpers for single-key wallets.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{
    Amount, KeyPair, LockScript, OutPoint, Signature, Transaction, TxIn, TxOut, UtxoSet, Witness,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalletError {
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: Amount, available: Amount },
}

/// Picks the owner's pay-to-key coins in outpoint order until `needed` is
/// covered, skipping anything in `reserved`.
pub fn select_coins(
    utxo: &UtxoSet,
    owner: &KeyPair,
    needed: Amount,
    reserved: &BTreeSet<OutPoint>,
) -> Result<(Vec<OutPoint>, Amount), WalletError> {
    let mut picked = vec![];
    let mut total = 0;
    for (op, coin) in utxo.coins_of(&owner.public) {
        if total >= needed && !picked.is_empty() {
            break;
        }
        if reserved.contains(op) {
            continue;
        }
        picked.push(*op);
        total += coin.output.value;
    }
    if total < needed || picked.is_empty() {
        return Err(WalletError::InsufficientFunds {
            needed,
            available: total,
        });
    }
    Ok((picked, total))
}

/// Adds `key`'s signature over the transaction's sighash to one input.
pub fn sign_input(tx: &mut Transaction, index: usize, key: &KeyPair) -> Signature {
    let sig = key.sign(&tx.sighash());
    tx.inputs[index].witness.signatures.push(sig);
    sig
}

/// Signs every input with the same key.
pub fn sign_all(tx: &mut Transaction, key: &KeyPair) {
    let sig = key.sign(&tx.sighash());
    for input in &mut tx.inputs {
        input.witness.signatures.push(sig);
    }
}

/// A fully signed payment from one key, change returned to the payer.
pub fn build_payment(
    utxo: &UtxoSet,
    from: &KeyPair,
    outputs: Vec<TxOut>,
    fee: Amount,
    reserved: &BTreeSet<OutPoint>,
) -> Result<Transaction, WalletError> {
    let needed = outputs.iter().map(|o| o.value).sum::<Amount>() + fee;
    let (coins, total) = select_coins(utxo, from, needed, reserved)?;
    let mut outputs = outputs;
    if total > needed {
        outputs.push(TxOut::to_key(total - needed, from.public));
    }
    let mut tx = Transaction::spending(&coins, outputs, 0);
    sign_all(&mut tx, from);
    Ok(tx)
}

/// A payment funded by several parties, each contributing a fixed amount
/// plus an equal share of `fee_each`. Every contributor gets its own change
/// output and signs its own inputs.
pub fn build_joint_payment(
    utxo: &UtxoSet,
    contributors: &[(&KeyPair, Amount)],
    outputs: Vec<TxOut>,
    fee_each: Amount,
    reserved: &BTreeSet<OutPoint>,
) -> Result<Transaction, WalletError> {
    let mut inputs = vec![];
    let mut owners = vec![];
    let mut change = vec![];
    for (who, amount) in contributors {
        let needed = amount + fee_each;
        let (coins, total) = select_coins(utxo, who, needed, reserved)?;
        for c in coins {
            inputs.push(c);
            owners.push(*who);
        }
        if total > needed {
            change.push(TxOut::to_key(total - needed, who.public));
        }
    }
    let mut outputs = outputs;
    outputs.extend(change);
    let mut tx = Transaction::spending(&inputs, outputs, 0);
    for (i, who) in owners.iter().enumerate() {
        sign_input(&mut tx, i, who);
    }
    Ok(tx)
}

/// A transaction input spending a pay-to-script-hash output: the witness
/// reveals the redeem script next to the signatures that satisfy it.
pub fn spend_p2sh(outpoint: OutPoint, redeem: LockScript, signatures: Vec<Signature>) -> TxIn {
    TxIn {
        outpoint,
        witness: Witness {
            signatures,
            redeem: Some(redeem),
            expr_preimage: None,
        },
    }
}
