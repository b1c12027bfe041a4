#![allow(dead_code)]

pub mod oz;
pub mod rk;
pub mod tc;

use oraclesim::counterparty::{compose, BetSide, MetaConfig, MetaMessage, XCP};
use oraclesim::datafeed::Comparator;
use oraclesim::simchain::wallet::{build_payment, sign_input};
use oraclesim::simchain::{
    keygen, mine_next, sim_rng, Chain, KeyPair, LockScript, Mempool, MempoolConfig, Miner,
    MinerTable, PolicyEra, StandardnessPolicy, Transaction, TxOut,
};
use oraclesim::simchain::{OutPoint, COIN};
use rand::Rng;
use std::collections::BTreeSet;

pub fn kp(s: &str) -> KeyPair {
    keygen(s.as_bytes()).unwrap()
}

/// Submits one non-standard transaction per block and mines until `n` of
/// them are confirmed. Only the one compliant miner (hashrate `share`) will
/// take them. Returns each transaction's inclusion delay in blocks.
pub fn nonstandard_delays(n: usize, share: f64, seed: u64) -> Vec<u64> {
    let payer = kp("delay/payer");
    let alloc: Vec<_> = (0..n).map(|_| (payer.public, 100_000)).collect();
    let mut chain = Chain::genesis(&alloc);
    chain.register_key(&payer);
    let coins: Vec<_> = chain
        .utxo()
        .coins_of(&payer.public)
        .map(|(op, _)| *op)
        .collect();
    let wide = LockScript::multisig(
        1,
        (0..4).map(|i| kp(&format!("delay/k{i}")).public).collect(),
    )
    .unwrap();
    let big = |id: &str, s: f64, ns: bool| Miner {
        block_size_budget: usize::MAX,
        ..Miner::new(id, s, ns)
    };
    let miners = MinerTable::new(vec![
        big("eligius", share, true),
        big("rest", 1.0 - share, false),
    ])
    .unwrap();
    let mut pool = Mempool::new(
        StandardnessPolicy::for_era(PolicyEra::V090),
        MempoolConfig {
            expiry_blocks: u64::MAX,
        },
    );
    let mut rng = sim_rng(seed);
    let mut delays = Vec::with_capacity(n);
    let mut next = coins.into_iter();
    while delays.len() < n {
        if let Some(op) = next.next() {
            let mut tx = Transaction::spending(&[op], vec![TxOut::new(90_000, wide.clone())], 0);
            sign_input(&mut tx, 0, &payer);
            pool.submit(&chain, tx).expect("admitted as non-standard");
        }
        let out = mine_next(&mut chain, &mut pool, &miners, &mut rng).unwrap();
        delays.extend(out.included.iter().map(|i| i.delay));
    }
    delays
}

pub fn mean(v: &[u64]) -> f64 {
    v.iter().sum::<u64>() as f64 / v.len() as f64
}

/// A host chain of `blocks` blocks carrying random meta traffic from five
/// parties: burns, sends that often overspend, feed broadcasts (some
/// stale), bets on the feed, plain payments and junk data outputs.
pub fn fuzzed_meta_chain(blocks: usize, seed: u64) -> (Chain, MetaConfig) {
    let parties: Vec<KeyPair> = (0..5).map(|i| kp(&format!("fuzz/{i}"))).collect();
    let alloc: Vec<_> = parties
        .iter()
        .flat_map(|k| [(k.public, 10 * COIN), (k.public, 10 * COIN)])
        .collect();
    let mut chain = Chain::genesis(&alloc);
    for k in &parties {
        chain.register_key(k);
    }
    let cfg = MetaConfig::default();
    let policy = StandardnessPolicy::for_era(PolicyEra::V090);
    let feed = &parties[0];
    let mut rng = sim_rng(seed);
    let mut clock = 1_400_000_000i64;
    for _ in 0..blocks {
        let mut reserved: BTreeSet<OutPoint> = BTreeSet::new();
        let mut txs = vec![];
        for (i, who) in parties.iter().enumerate() {
            if !rng.gen_bool(0.6) {
                continue;
            }
            let other = parties[(i + rng.gen_range(1..5)) % 5].public;
            let msg = match rng.gen_range(0..6) {
                0 => MetaMessage::Burn {
                    btc_qty: rng.gen_range(1..2_000_000),
                },
                1 | 2 => MetaMessage::Send {
                    asset: XCP.into(),
                    qty: rng.gen_range(1..3 * COIN),
                    dest: other,
                },
                3 => {
                    let who = if rng.gen_bool(0.8) { feed } else { who };
                    clock += rng.gen_range(-600..3_600);
                    let tx = compose(
                        chain.utxo(),
                        who,
                        &MetaMessage::Broadcast {
                            timestamp: clock,
                            value: rng.gen_range(0.0..100.0f64).round(),
                            fee_fraction: rng.gen_range(0..1_500_000),
                            text: "fuzz".into(),
                        },
                        &policy,
                        &cfg,
                        10_000,
                        &reserved,
                    );
                    if let Ok(tx) = tx {
                        reserved.extend(tx.inputs.iter().map(|x| x.outpoint));
                        txs.push(tx);
                    }
                    continue;
                }
                4 => MetaMessage::Bet {
                    feed: feed.public,
                    comparator: [
                        Comparator::Lt,
                        Comparator::Ge,
                        Comparator::Eq,
                        Comparator::EventTrue,
                    ][rng.gen_range(0..4)],
                    target: rng.gen_range(0.0..100.0f64).round(),
                    deadline: clock + rng.gen_range(-3_600..20_000),
                    wager: rng.gen_range(1..4) * 10_000_000,
                    counterwager: rng.gen_range(1..4) * 10_000_000,
                    side: if rng.gen_bool(0.5) {
                        BetSide::Yes
                    } else {
                        BetSide::No
                    },
                },
                _ => {
                    let out = if rng.gen_bool(0.5) {
                        TxOut::to_key(rng.gen_range(1_000..100_000), other)
                    } else {
                        let junk: Vec<u8> = (0..rng.gen_range(0..40)).map(|_| rng.gen()).collect();
                        TxOut::new(0, LockScript::data_carrier(junk))
                    };
                    if let Ok(tx) = build_payment(chain.utxo(), who, vec![out], 10_000, &reserved) {
                        reserved.extend(tx.inputs.iter().map(|x| x.outpoint));
                        txs.push(tx);
                    }
                    continue;
                }
            };
            if let Ok(tx) = compose(chain.utxo(), who, &msg, &policy, &cfg, 10_000, &reserved) {
                reserved.extend(tx.inputs.iter().map(|x| x.outpoint));
                txs.push(tx);
            }
        }
        chain
            .append_block("m", txs)
            .expect("fuzzed block is host-valid");
    }
    (chain, cfg)
}

/// Random condition pairs over two keys, every comparator, and integer or
/// half-integer thresholds. Returns how many pairs the analytic overlap
/// check and exhaustive point sampling disagree on.
pub fn overlap_disagreements(pairs: usize, seed: u64) -> usize {
    use oraclesim::datafeed::Value;
    use oraclesim::oraclize::{conditions_overlap, Condition};

    let comparators = [
        Comparator::Lt,
        Comparator::Le,
        Comparator::Eq,
        Comparator::Ge,
        Comparator::Gt,
        Comparator::EventTrue,
    ];
    let who = kp("overlap/beneficiary").public;
    let mut rng = sim_rng(seed);
    let random_condition = |rng: &mut oraclesim::simchain::SimRng| Condition {
        source_id: "s".into(),
        key: ["temp", "rain"][rng.gen_range(0..2)].into(),
        comparator: comparators[rng.gen_range(0..6)],
        threshold: rng.gen_range(-10..=10) as f64 / 2.0,
        beneficiary: who,
    };
    let mut bad = 0;
    for _ in 0..pairs {
        let a = random_condition(&mut rng);
        let b = random_condition(&mut rng);
        // Every threshold, both sides of it, and points past the ends cover
        // each region the two comparisons can carve out.
        let mut points = vec![Value::Bool(true), Value::Bool(false)];
        for t in [a.threshold, b.threshold] {
            for d in [-0.25, 0.0, 0.25] {
                points.push(Value::Number(t + d));
            }
        }
        points.push(Value::Number(-100.0));
        points.push(Value::Number(100.0));
        let sampled = a.key == b.key
            && points
                .iter()
                .any(|v| a.comparator.eval(v, a.threshold) && b.comparator.eval(v, b.threshold));
        if sampled != conditions_overlap(&a, &b) {
            bad += 1;
        }
    }
    bad
}

/// Every bundled scenario file, sorted by name.
pub fn bundled_scenarios() -> Vec<std::path::PathBuf> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    v
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}
