use std::collections::BTreeSet;

use rand::Rng;

use super::kp;
use oraclesim::datafeed::{Comparator, DataSource, FeedSet, Value};
use oraclesim::realitykeys::{
    demo_countersign, demo_makekeys, demo_setup, DemoContract, DemoTerms, FactId, Outcome,
    RealityKeysError, Registry, SecretError, SourceRef, MIN_OBJECTION_TIP,
};
use oraclesim::simchain::wallet::{build_payment, spend_p2sh};
use oraclesim::simchain::{
    sim_rng, Chain, KeyPair, KeyRegistry, Transaction, TxError, TxOut, COIN,
};

pub const T0: i64 = 1_400_000_000;
pub const RES: i64 = T0 + 86_400;

pub fn feeds(value: bool) -> FeedSet {
    let mut d = DataSource::new("freebase", true);
    d.insert("winner", RES - 10, Value::Bool(value));
    let mut f = FeedSet::new();
    f.add(d);
    f
}

pub struct Demo {
    pub chain: Chain,
    pub registry: Registry,
    pub fact: FactId,
    pub alice: KeyPair,
    pub bob: KeyPair,
    pub terms: DemoTerms,
}

/// Registers the fact and funds both temporary addresses.
pub fn funded(feeds: &FeedSet) -> Demo {
    let (alice, bob) = (demo_makekeys("alice"), demo_makekeys("bob"));
    let funder = kp("funder");
    let mut chain = Chain::genesis(&[(funder.public, 10 * COIN)]);
    for k in [&funder, &alice, &bob] {
        chain.register_key(k);
    }
    let mut registry = Registry::new("it");
    let src = SourceRef {
        source_id: "freebase".into(),
        key: "winner".into(),
        comparator: Comparator::EventTrue,
        threshold: 0.0,
    };
    let fact = registry
        .register_fact("alice wins?", RES, src, T0, feeds, chain.keys_mut())
        .unwrap();
    let tx = build_payment(
        chain.utxo(),
        &funder,
        vec![
            TxOut::to_key(COIN, alice.public),
            TxOut::to_key(2 * COIN, bob.public),
        ],
        1_000,
        &BTreeSet::new(),
    )
    .unwrap();
    chain.append_block("m", vec![tx.clone()]).unwrap();
    let terms = DemoTerms {
        fact_id: fact.id,
        yes_pub: fact.yes_pub,
        no_pub: fact.no_pub,
        alice_pub: alice.public,
        bob_pub: bob.public,
        alice_temp: tx.outpoint(0),
        bob_temp: tx.outpoint(1),
        alice_stake: COIN,
        bob_stake: 2 * COIN,
        fee: 10_000,
    };
    Demo {
        chain,
        registry,
        fact: fact.id,
        alice,
        bob,
        terms,
    }
}

pub fn contract(d: &mut Demo) -> DemoContract {
    let partial = demo_setup(d.chain.utxo(), &d.terms, &d.alice).unwrap();
    let (tx, c) = demo_countersign(d.chain.utxo(), &d.terms, &d.bob, &partial).unwrap();
    d.chain.append_block("m", vec![tx]).unwrap();
    c
}

pub fn resolve(d: &mut Demo, feeds: &FeedSet) {
    d.registry.post_result(d.fact, RES, feeds).unwrap();
    d.registry.finalize(d.fact, RES + 86_400).unwrap();
}

/// Every witness the outside world can assemble after finalization: any
/// ordered subset of {alice, bob, released key}. Only the winner's branch
/// ever validates.
pub fn losing_branch_never_validates() {
    for alice_wins in [true, false] {
        let f = feeds(alice_wins);
        let mut d = funded(&f);
        let c = contract(&mut d);
        resolve(&mut d, &f);
        let (_, secret) = d.registry.released(d.fact).unwrap();
        let fact_key = KeyPair::from_secret(secret);
        let pool = [&d.alice, &d.bob, &fact_key];
        let winner = if alice_wins {
            d.alice.public
        } else {
            d.bob.public
        };
        for mask in 0u8..8 {
            let signers: Vec<&KeyPair> = (0..3)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| pool[i])
                .collect();
            let mut tx = Transaction::spending(
                &[c.outpoint],
                vec![TxOut::to_key(c.value - 1_000, d.alice.public)],
                0,
            );
            let h = tx.sighash();
            tx.inputs[0] = spend_p2sh(
                c.outpoint,
                c.redeem.clone(),
                signers.iter().map(|k| k.sign(&h)).collect(),
            );
            let has_winner = signers.iter().any(|k| k.public == winner);
            let has_fact = signers.iter().any(|k| k.public == fact_key.public);
            let ok = d.chain.validate(&tx).is_ok();
            assert_eq!(
                ok,
                has_winner && has_fact,
                "alice_wins={alice_wins} mask={mask:03b}"
            );
            if !ok {
                assert_eq!(d.chain.validate(&tx), Err(TxError::BadWitness));
            }
        }
        let loser_outcome = if alice_wins {
            Outcome::No
        } else {
            Outcome::Yes
        };
        assert_eq!(
            d.registry.query_secret(d.fact, loser_outcome),
            Err(SecretError::Destroyed)
        );
    }
}

/// Many facts with random sources, results, objections and repeated
/// finalization: one release per fact, the other key gone for good.
pub fn randomized_resolutions(n: usize, seed: u64) {
    let mut rng = sim_rng(seed);
    let mut src = DataSource::new("s", true);
    let mut keys = KeyRegistry::new();
    let mut reg = Registry::new("fuzz");
    reg.objection_window = 3_600;
    let mut facts = vec![];
    for i in 0..n {
        let key = format!("k{i}");
        let numeric = rng.gen_bool(0.5);
        let value = if numeric {
            Value::Number(rng.gen_range(-50.0..50.0))
        } else {
            Value::Bool(rng.gen_bool(0.5))
        };
        src.insert(key.clone(), RES, value);
        let comparator = if numeric {
            [
                Comparator::Lt,
                Comparator::Le,
                Comparator::Ge,
                Comparator::Gt,
            ][rng.gen_range(0..4)]
        } else {
            Comparator::EventTrue
        };
        facts.push((key, comparator, rng.gen_range(-50.0..50.0)));
    }
    let mut feeds = FeedSet::new();
    feeds.add(src);
    let mut ids = vec![];
    for (key, comparator, threshold) in &facts {
        let sref = SourceRef {
            source_id: "s".into(),
            key: key.clone(),
            comparator: *comparator,
            threshold: *threshold,
        };
        ids.push(
            reg.register_fact("q", RES, sref, T0, &feeds, &mut keys)
                .unwrap()
                .id,
        );
    }
    for id in &ids {
        let posted = reg.post_result(*id, RES, &feeds).unwrap();
        let mut expected = posted;
        if rng.gen_bool(0.3) {
            let tip = rng.gen_range(900_000..1_100_000);
            let verdict = if rng.gen_bool(0.5) {
                Outcome::Yes
            } else {
                Outcome::No
            };
            let r = reg.object(*id, tip, verdict, RES + 10);
            assert_eq!(r.is_ok(), tip >= MIN_OBJECTION_TIP);
            if r.is_ok() {
                expected = verdict;
            }
        }
        assert_eq!(reg.finalize(*id, RES + 10), Err(RealityKeysError::TooEarly));
        let s1 = reg.finalize(*id, RES + 3_600).unwrap();
        let s2 = reg.finalize(*id, RES + 7_200).unwrap();
        assert_eq!(s1, s2);
        let (won, _) = reg.released(*id).unwrap();
        assert_eq!(won, expected);
        assert_eq!(
            reg.query_secret(*id, won.other()),
            Err(SecretError::Destroyed)
        );
    }
    assert_eq!(reg.releases().len(), ids.len());
    let distinct: BTreeSet<_> = reg.releases().iter().map(|r| r.fact_id).collect();
    assert_eq!(distinct.len(), ids.len());
}
