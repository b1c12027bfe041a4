use std::collections::BTreeSet;

use oraclesim::datafeed::{Comparator, DataSource, FeedSet, Value};
use oraclesim::oraclize::{build_contract, Condition, ConditionalContract, ContractSpec};
use oraclesim::simchain::{keygen, Chain, KeyPair, COIN};

pub const T0: i64 = 1_400_000_000;
pub const H: i64 = 3_600;

pub struct Party {
    pub alice: KeyPair,
    pub bob: KeyPair,
    pub oracle: KeyPair,
    pub carol: KeyPair,
}

pub fn party() -> Party {
    Party {
        alice: keygen(b"alice").unwrap(),
        bob: keygen(b"bob").unwrap(),
        oracle: keygen(b"oraclize").unwrap(),
        carol: keygen(b"carol").unwrap(),
    }
}

/// Temperature and rain series for one day of hourly samples.
pub fn milan(temps: &[f64], rain: &[bool], ssl: bool) -> FeedSet {
    let mut s = DataSource::new("wolfram", ssl);
    for (i, t) in temps.iter().enumerate() {
        s.insert("milan_temp", T0 + i as i64 * H, Value::Number(*t));
    }
    for (i, r) in rain.iter().enumerate() {
        s.insert("milan_rain", T0 + i as i64 * H, Value::Bool(*r));
    }
    let mut f = FeedSet::new();
    f.add(s);
    f
}

pub fn spec(p: &Party, proofshield: bool) -> ContractSpec {
    ContractSpec {
        alice: p.alice.public,
        bob: p.bob.public,
        oracle: p.oracle.public,
        arbitrator: None,
        conditions: vec![
            Condition {
                source_id: "wolfram".into(),
                key: "milan_temp".into(),
                comparator: Comparator::Gt,
                threshold: 10.0,
                beneficiary: p.bob.public,
            },
            Condition {
                source_id: "wolfram".into(),
                key: "milan_rain".into(),
                comparator: Comparator::EventTrue,
                threshold: 0.0,
                beneficiary: p.bob.public,
            },
        ],
        default_beneficiary: p.alice.public,
        start: T0,
        end: T0 + 24 * H,
        poll_interval: H,
        refund_locktime: 200,
        proofshield,
        alice_stake: COIN,
        bob_stake: COIN,
        fee: 10_000,
    }
}

pub fn setup(p: &Party, s: ContractSpec, feeds: &FeedSet) -> (Chain, ConditionalContract) {
    let mut chain = Chain::genesis(&[(p.alice.public, 5 * COIN), (p.bob.public, 5 * COIN)]);
    for k in [&p.alice, &p.bob, &p.oracle, &p.carol] {
        chain.register_key(k);
    }
    let (c, funding) =
        build_contract(chain.utxo(), s, &p.alice, &p.bob, feeds, &BTreeSet::new()).unwrap();
    chain.append_block("m", vec![funding]).unwrap();
    (chain, c)
}
