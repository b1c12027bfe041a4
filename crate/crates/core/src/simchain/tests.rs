use std::collections::BTreeSet;

use super::wallet::{build_payment, sign_input, spend_p2sh};
use super::*;

fn kp(s: &str) -> KeyPair {
    keygen(s.as_bytes()).unwrap()
}

/// Chain with one coin of `value` locked by `lock`, funded from a genesis key.
fn chain_with(lock: LockScript, value: Amount, signers: &[&KeyPair]) -> (Chain, OutPoint) {
    let funder = kp("funder");
    let mut chain = Chain::genesis(&[(funder.public, 100 * COIN)]);
    chain.register_key(&funder);
    for s in signers {
        chain.register_key(s);
    }
    let tx = build_payment(
        chain.utxo(),
        &funder,
        vec![TxOut::new(value, lock)],
        1000,
        &BTreeSet::new(),
    )
    .unwrap();
    let op = tx.outpoint(0);
    chain.append_block("m", vec![tx]).unwrap();
    (chain, op)
}

fn spend(op: OutPoint, to: &KeyPair, value: Amount) -> Transaction {
    Transaction::spending(&[op], vec![TxOut::to_key(value, to.public)], 0)
}

#[test]
fn overspend_rejected() {
    let a = kp("a");
    let (chain, op) = chain_with(LockScript::pay_to_key(a.public), 5000, &[&a]);
    let mut tx = spend(op, &a, 5001);
    sign_input(&mut tx, 0, &a);
    assert_eq!(chain.validate(&tx), Err(TxError::Overspend));
    let mut ok = spend(op, &a, 5000);
    sign_input(&mut ok, 0, &a);
    assert_eq!(chain.validate(&ok), Ok(0));
}

#[test]
fn data_carrier_unspendable() {
    let a = kp("a");
    let (chain, op) = chain_with(LockScript::data_carrier(b"x".to_vec()), 10, &[&a]);
    let mut tx = spend(op, &a, 0);
    sign_input(&mut tx, 0, &a);
    assert_eq!(chain.validate(&tx), Err(TxError::UnspendableInput));
}

#[test]
fn missing_and_double_spend() {
    let a = kp("a");
    let (mut chain, op) = chain_with(LockScript::pay_to_key(a.public), 5000, &[&a]);
    let mut missing = spend(OutPoint::new(sha256(b"nothing"), 0), &a, 1);
    sign_input(&mut missing, 0, &a);
    assert_eq!(chain.validate(&missing), Err(TxError::MissingInput));

    let mut first = spend(op, &a, 4000);
    sign_input(&mut first, 0, &a);
    chain.append_block("m", vec![first]).unwrap();
    let mut second = spend(op, &a, 3000);
    sign_input(&mut second, 0, &a);
    assert_eq!(chain.validate(&second), Err(TxError::DoubleSpend));
}

#[test]
fn same_outpoint_twice_in_one_tx() {
    let a = kp("a");
    let (chain, op) = chain_with(LockScript::pay_to_key(a.public), 5000, &[&a]);
    let mut tx = Transaction::spending(&[op, op], vec![TxOut::to_key(1, a.public)], 0);
    sign_input(&mut tx, 0, &a);
    sign_input(&mut tx, 1, &a);
    assert_eq!(chain.validate(&tx), Err(TxError::DoubleSpend));
}

#[test]
fn two_of_three_every_pair_validates() {
    let keys = [kp("k0"), kp("k1"), kp("k2")];
    let lock = LockScript::multisig(2, keys.iter().map(|k| k.public).collect()).unwrap();
    let refs: Vec<&KeyPair> = keys.iter().collect();
    let (chain, op) = chain_with(lock, 9000, &refs);
    let dest = kp("dest");
    // Enumerate every subset of the three keys: exactly the subsets of
    // size >= 2 satisfy the lock.
    for mask in 0u8..8 {
        let mut tx = spend(op, &dest, 8000);
        for (i, k) in keys.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sign_input(&mut tx, 0, k);
            }
        }
        let expect_ok = mask.count_ones() >= 2;
        assert_eq!(chain.validate(&tx).is_ok(), expect_ok, "mask {mask:03b}");
        if !expect_ok {
            assert_eq!(chain.validate(&tx), Err(TxError::BadWitness));
        }
    }
}

#[test]
fn duplicate_signatures_do_not_count_twice() {
    let keys = [kp("k0"), kp("k1"), kp("k2")];
    let lock = LockScript::multisig(2, keys.iter().map(|k| k.public).collect()).unwrap();
    let refs: Vec<&KeyPair> = keys.iter().collect();
    let (chain, op) = chain_with(lock, 9000, &refs);
    let mut tx = spend(op, &kp("d"), 1);
    sign_input(&mut tx, 0, &keys[0]);
    sign_input(&mut tx, 0, &keys[0]);
    assert_eq!(chain.validate(&tx), Err(TxError::BadWitness));
}

#[test]
fn unlisted_signer_ignored() {
    let keys = [kp("k0"), kp("k1")];
    let outsider = kp("outsider");
    let lock = LockScript::multisig(2, keys.iter().map(|k| k.public).collect()).unwrap();
    let (chain, op) = chain_with(lock, 9000, &[&keys[0], &keys[1], &outsider]);
    let mut tx = spend(op, &outsider, 1);
    sign_input(&mut tx, 0, &keys[0]);
    sign_input(&mut tx, 0, &outsider);
    assert_eq!(chain.validate(&tx), Err(TxError::BadWitness));
}

#[test]
fn timelock_and_locktime() {
    let a = kp("a");
    let lock = LockScript::time_locked(LockScript::pay_to_key(a.public), 5);
    let (mut chain, op) = chain_with(lock, 5000, &[&a]);
    let mut tx = spend(op, &a, 4000);
    sign_input(&mut tx, 0, &a);
    assert_eq!(chain.validate(&tx), Err(TxError::Premature));
    while chain.tip_height() + 1 < 5 {
        chain.append_block("m", vec![]).unwrap();
    }
    assert!(chain.validate(&tx).is_ok());

    let b = kp("b");
    let (chain2, op2) = chain_with(LockScript::pay_to_key(b.public), 5000, &[&b]);
    let mut late = spend(op2, &b, 1);
    late.locktime = 10;
    sign_input(&mut late, 0, &b);
    assert_eq!(chain2.validate(&late), Err(TxError::Premature));
}

#[test]
fn p2sh_round_trip_and_wrong_redeem() {
    let a = kp("a");
    let b = kp("b");
    let redeem = LockScript::multisig(2, vec![a.public, b.public]).unwrap();
    let lock = p2sh_lock(&redeem).unwrap();
    let (chain, op) = chain_with(lock, 5000, &[&a, &b]);

    let mut tx = spend(op, &a, 4000);
    let h = tx.sighash();
    tx.inputs[0] = spend_p2sh(op, redeem, vec![a.sign(&h), b.sign(&h)]);
    assert!(chain.validate(&tx).is_ok());

    // Same shape, different key order: a different digest.
    let other = LockScript::multisig(2, vec![b.public, a.public]).unwrap();
    let mut bad = spend(op, &a, 4000);
    let h = bad.sighash();
    bad.inputs[0] = spend_p2sh(op, other, vec![a.sign(&h), b.sign(&h)]);
    assert_eq!(chain.validate(&bad), Err(TxError::BadWitness));
}

#[test]
fn either_branch_redeem() {
    let alice = kp("alice");
    let bob = kp("bob");
    let yes = kp("yes");
    let no = kp("no");
    let redeem = LockScript::either(
        LockScript::multisig(2, vec![alice.public, yes.public]).unwrap(),
        LockScript::multisig(2, vec![bob.public, no.public]).unwrap(),
    );
    let lock = p2sh_lock(&redeem).unwrap();
    let (chain, op) = chain_with(lock, 5000, &[&alice, &bob, &yes, &no]);
    let try_with = |signers: &[&KeyPair]| {
        let mut tx = spend(op, &alice, 4000);
        let h = tx.sighash();
        tx.inputs[0] = spend_p2sh(
            op,
            redeem.clone(),
            signers.iter().map(|k| k.sign(&h)).collect(),
        );
        chain.validate(&tx)
    };
    assert!(try_with(&[&alice, &yes]).is_ok());
    assert!(try_with(&[&bob, &no]).is_ok());
    assert_eq!(try_with(&[&alice, &no]), Err(TxError::BadWitness));
    assert_eq!(try_with(&[&bob, &yes]), Err(TxError::BadWitness));
}

#[test]
fn hash_gated_requires_preimage() {
    let o = kp("oracle");
    let h = kp("heir");
    let expr = b"has_died('x')".to_vec();
    let lock = LockScript::hash_gated_multisig(2, vec![o.public, h.public], sha256(&expr)).unwrap();
    let (chain, op) = chain_with(lock, 5000, &[&o, &h]);
    let mut tx = spend(op, &h, 4000);
    sign_input(&mut tx, 0, &o);
    sign_input(&mut tx, 0, &h);
    assert_eq!(chain.validate(&tx), Err(TxError::BadWitness));
    tx.inputs[0].witness.expr_preimage = Some(b"has_died('y')".to_vec());
    assert_eq!(chain.validate(&tx), Err(TxError::BadWitness));
    tx.inputs[0].witness.expr_preimage = Some(expr);
    assert!(chain.validate(&tx).is_ok());
}

#[test]
fn malformed_output_rejected() {
    let a = kp("a");
    let (chain, op) = chain_with(LockScript::pay_to_key(a.public), 5000, &[&a]);
    let keys: Vec<_> = (0..16).map(|i| kp(&format!("x{i}")).public).collect();
    let mut tx = Transaction::spending(
        &[op],
        vec![TxOut::new(1, LockScript::MultiSig { required: 2, keys })],
        0,
    );
    sign_input(&mut tx, 0, &a);
    assert_eq!(chain.validate(&tx), Err(TxError::MalformedScript));
}

#[test]
fn classification_never_changes_validity() {
    let keys: Vec<KeyPair> = (0..11).map(|i| kp(&format!("o{i}"))).collect();
    let lock = LockScript::multisig(8, keys.iter().map(|k| k.public).collect()).unwrap();
    let refs: Vec<&KeyPair> = keys.iter().collect();
    let (chain, op) = chain_with(lock, 5000, &refs);
    let mut tx = spend(op, &keys[0], 4000);
    for k in &keys[..8] {
        sign_input(&mut tx, 0, k);
    }
    assert!(chain.validate(&tx).is_ok());
    for era in [PolicyEra::Test2013, PolicyEra::V090] {
        assert!(!classify(&tx, &StandardnessPolicy::for_era(era)).is_standard());
    }
}

fn policy() -> StandardnessPolicy {
    StandardnessPolicy::for_era(PolicyEra::V090)
}

#[test]
fn mempool_duplicate_and_conflict() {
    let a = kp("a");
    let (chain, op) = chain_with(LockScript::pay_to_key(a.public), 5000, &[&a]);
    let mut pool = Mempool::new(policy(), MempoolConfig::default());
    let mut tx = spend(op, &a, 4000);
    sign_input(&mut tx, 0, &a);
    assert!(pool.submit(&chain, tx.clone()).is_ok());
    assert_eq!(pool.submit(&chain, tx), Err(Rejection::Duplicate));
    let mut conflicting = spend(op, &a, 3000);
    sign_input(&mut conflicting, 0, &a);
    assert_eq!(pool.submit(&chain, conflicting), Err(Rejection::Conflict));
    let mut bad = spend(op, &a, 6000);
    sign_input(&mut bad, 0, &a);
    let mut pool2 = Mempool::new(policy(), MempoolConfig::default());
    assert_eq!(
        pool2.submit(&chain, bad),
        Err(Rejection::Invalid(TxError::Overspend))
    );
}

#[test]
fn greedy_fee_per_byte_selection() {
    let a = kp("a");
    let b = kp("b");
    let funder = kp("funder");
    let mut chain = Chain::genesis(&[(a.public, 10_000), (b.public, 10_000), (funder.public, 1)]);
    chain.register_key(&a);
    chain.register_key(&b);
    let ops: Vec<OutPoint> = chain.utxo().iter().map(|(op, _)| *op).collect();
    let coin_of = |k: &KeyPair| {
        *ops.iter()
            .find(|op| {
                chain.utxo().get(op).unwrap().output.lock == LockScript::pay_to_key(k.public)
            })
            .unwrap()
    };
    let mut low = spend(coin_of(&a), &a, 10_000 - 5);
    sign_input(&mut low, 0, &a);
    let mut high = spend(coin_of(&b), &b, 10_000 - 10);
    sign_input(&mut high, 0, &b);
    assert_eq!(low.size(), high.size());

    let mut pool = Mempool::new(policy(), MempoolConfig::default());
    pool.submit(&chain, low.clone()).unwrap();
    pool.submit(&chain, high.clone()).unwrap();
    let mut miner = Miner::new("m", 1.0, false);
    miner.block_size_budget = high.size() + 10;
    let table = MinerTable::new(vec![miner]).unwrap();
    let mut rng = sim_rng(1);
    let out = mine_next(&mut chain, &mut pool, &table, &mut rng).unwrap();
    assert_eq!(out.included.len(), 1);
    assert_eq!(out.included[0].txid, high.txid());
    let out = mine_next(&mut chain, &mut pool, &table, &mut rng).unwrap();
    assert_eq!(out.included[0].txid, low.txid());
}

fn nonstandard_spend() -> (Chain, Transaction) {
    let keys: Vec<KeyPair> = (0..4).map(|i| kp(&format!("q{i}"))).collect();
    let lock = LockScript::multisig(4, keys.iter().map(|k| k.public).collect()).unwrap();
    let refs: Vec<&KeyPair> = keys.iter().collect();
    let (chain, op) = chain_with(lock, 5000, &refs);
    let mut tx = spend(op, &keys[0], 4000);
    for k in &keys {
        sign_input(&mut tx, 0, k);
    }
    (chain, tx)
}

#[test]
fn nonstandard_admitted_but_not_mined_by_compliant_only_miners() {
    let (mut chain, tx) = nonstandard_spend();
    let mut pool = Mempool::new(policy(), MempoolConfig { expiry_blocks: 5 });
    pool.submit(&chain, tx.clone()).unwrap();
    assert!(!pool.get(&tx.txid()).unwrap().standardness.is_standard());
    let table = MinerTable::new(vec![
        Miner::new("a", 0.5, false),
        Miner::new("b", 0.5, false),
    ])
    .unwrap();
    let mut rng = sim_rng(9);
    let mut expired_at = None;
    for _ in 0..10 {
        let out = mine_next(&mut chain, &mut pool, &table, &mut rng).unwrap();
        assert!(out.included.is_empty());
        if out.expired.contains(&tx.txid()) {
            expired_at = Some(out.height);
        }
    }
    assert_eq!(expired_at, Some(chain.blocks()[1].height + 5));
    assert!(pool.is_empty());
}

#[test]
fn nonstandard_mined_by_accepting_miner() {
    let (mut chain, tx) = nonstandard_spend();
    let mut pool = Mempool::new(policy(), MempoolConfig::default());
    pool.submit(&chain, tx.clone()).unwrap();
    let table = MinerTable::new(vec![Miner::new("eligius", 1.0, true)]).unwrap();
    let out = mine_next(&mut chain, &mut pool, &table, &mut sim_rng(3)).unwrap();
    assert_eq!(out.included[0].txid, tx.txid());
    assert_eq!(out.included[0].delay, 1);
}

#[test]
fn miner_table_validation() {
    assert_eq!(MinerTable::new(vec![]), Err(MiningError::NoMiners));
    assert!(matches!(
        MinerTable::new(vec![Miner::new("a", 0.5, true)]),
        Err(MiningError::BadHashrate(_))
    ));
    assert!(MinerTable::new(vec![
        Miner::new("a", 0.07, true),
        Miner::new("b", 0.93, false)
    ])
    .is_ok());
}

#[test]
fn supply_accounting() {
    let a = kp("a");
    let (mut chain, op) = chain_with(LockScript::pay_to_key(a.public), 5000, &[&a]);
    let mut tx = Transaction::spending(
        &[op],
        vec![
            TxOut::to_key(3000, a.public),
            TxOut::new(500, LockScript::data_carrier(vec![1])),
        ],
        0,
    );
    sign_input(&mut tx, 0, &a);
    chain.append_block("m", vec![tx]).unwrap();
    assert_eq!(
        chain.utxo().total_value() + chain.fees_total(),
        chain.genesis_supply()
    );
    assert_eq!(chain.utxo().unspendable_value(), 500);
    assert_eq!(chain.fees_total(), 1000 + 1500);
}
