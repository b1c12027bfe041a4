mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{kp, mean, nonstandard_delays};
use oraclesim::simchain::wallet::{build_payment, sign_input};
use oraclesim::simchain::{
    classify, sha256, Chain, LockScript, OutPoint, PolicyEra, PubKey, StandardnessPolicy,
    Transaction, TxError, TxIn, TxOut, Witness,
};

fn arb_pub() -> impl Strategy<Value = PubKey> {
    any::<[u8; 8]>().prop_map(|b| kp(&hex::encode(b)).public)
}

fn arb_lock() -> impl Strategy<Value = LockScript> {
    let leaf = prop_oneof![
        arb_pub().prop_map(LockScript::pay_to_key),
        (1usize..=3, prop::collection::vec(arb_pub(), 3))
            .prop_map(|(m, keys)| LockScript::multisig(m, keys).unwrap()),
        prop::collection::vec(any::<u8>(), 0..120).prop_map(LockScript::data_carrier),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), 0u64..1000).prop_map(|(l, h)| LockScript::time_locked(l, h)),
            (inner.clone(), inner).prop_map(|(a, b)| LockScript::either(a, b)),
        ]
    })
}

fn arb_tx() -> impl Strategy<Value = Transaction> {
    let input = (
        any::<[u8; 4]>(),
        0u32..4,
        prop::collection::vec(any::<[u8; 4]>(), 0..3),
    )
        .prop_map(|(t, i, sigs)| TxIn {
            outpoint: OutPoint::new(sha256(&t), i),
            witness: Witness {
                signatures: sigs
                    .iter()
                    .map(|s| kp(&hex::encode(s)).sign(&sha256(s)))
                    .collect(),
                ..Default::default()
            },
        });
    let output = (0u64..10_000_000, arb_lock()).prop_map(|(v, l)| TxOut::new(v, l));
    (
        prop::collection::vec(input, 0..4),
        prop::collection::vec(output, 0..4),
        any::<u64>(),
    )
        .prop_map(|(inputs, outputs, locktime)| Transaction {
            inputs,
            outputs,
            locktime,
        })
}

proptest! {
    #[test]
    fn transaction_bytes_round_trip(tx in arb_tx()) {
        let bytes = tx.to_bytes();
        let back = Transaction::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.txid(), tx.txid());
        prop_assert_eq!(back, tx);
    }

    #[test]
    fn json_round_trip(tx in arb_tx()) {
        let back: Transaction = serde_json::from_str(&serde_json::to_string(&tx).unwrap()).unwrap();
        prop_assert_eq!(back, tx);
    }

    /// Random payments between a few keys: supply is conserved, every coin
    /// is spent at most once.
    #[test]
    fn random_payments_conserve_supply(
        plan in prop::collection::vec((0usize..4, 0usize..4, 1u64..50_000, 0u64..2_000), 1..40)
    ) {
        let keys: Vec<_> = (0..4).map(|i| kp(&format!("pay/{i}"))).collect();
        let alloc: Vec<_> = keys.iter().map(|k| (k.public, 1_000_000)).collect();
        let mut chain = Chain::genesis(&alloc);
        for k in &keys {
            chain.register_key(k);
        }
        let mut spent = BTreeSet::new();
        for (from, to, value, fee) in plan {
            let Ok(tx) = build_payment(
                chain.utxo(),
                &keys[from],
                vec![TxOut::to_key(value, keys[to].public)],
                fee,
                &BTreeSet::new(),
            ) else {
                continue;
            };
            for i in &tx.inputs {
                prop_assert!(spent.insert(i.outpoint));
            }
            chain.append_block("m", vec![tx.clone()]).unwrap();
            prop_assert_eq!(chain.validate(&tx), Err(TxError::DoubleSpend));
            prop_assert_eq!(
                chain.utxo().total_value() + chain.fees_total(),
                chain.genesis_supply()
            );
        }
    }

    /// Standardness is a relay judgement only.
    #[test]
    fn classification_does_not_affect_validity(len in 0usize..200, era_new in any::<bool>()) {
        let a = kp("a");
        let mut chain = Chain::genesis(&[(a.public, 10_000)]);
        chain.register_key(&a);
        let op = chain.utxo().coins_of(&a.public).next().map(|(o, _)| *o).unwrap();
        let mut tx = Transaction::spending(
            &[op],
            vec![TxOut::new(0, LockScript::data_carrier(vec![7; len]))],
            0,
        );
        sign_input(&mut tx, 0, &a);
        let era = if era_new { PolicyEra::V090 } else { PolicyEra::Test2013 };
        let _ = classify(&tx, &StandardnessPolicy::for_era(era));
        prop_assert_eq!(chain.validate(&tx), Ok(10_000));
    }
}

#[test]
fn data_carrier_era_boundaries() {
    let old = StandardnessPolicy::for_era(PolicyEra::Test2013);
    let new = StandardnessPolicy::for_era(PolicyEra::V090);
    for len in 0..=120 {
        let tx = Transaction::spending(
            &[],
            vec![TxOut::new(0, LockScript::data_carrier(vec![0; len]))],
            0,
        );
        assert_eq!(
            classify(&tx, &old).is_standard(),
            len <= 80,
            "test2013 len {len}"
        );
        assert_eq!(
            classify(&tx, &new).is_standard(),
            len <= 40,
            "v090 len {len}"
        );
    }
}

#[test]
fn compliant_miner_share_sets_delay() {
    // Geometric with p = 0.25 has mean 4.
    let d = nonstandard_delays(2_000, 0.25, 7);
    assert_eq!(d.len(), 2_000);
    assert!(d.iter().all(|x| *x >= 1));
    let m = mean(&d);
    assert!((3.5..4.5).contains(&m), "mean {m}");
}
