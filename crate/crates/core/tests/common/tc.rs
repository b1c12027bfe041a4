use std::collections::BTreeMap;

use rand::Rng;

use oraclesim::simchain::sim_rng;
use oraclesim::truthcoin::{
    vote_commitment, BallotId, DecisionId, DecisionKind, Market, Truthcoin, TruthcoinConfig,
    TruthcoinError, VetoVerdict, UNIT,
};

pub const WINDOW: usize = 10;

pub fn config() -> TruthcoinConfig {
    TruthcoinConfig {
        commit_period: 10,
        reveal_period: 10,
        waiting_period: 0,
        veto_window_blocks: WINDOW,
        ..TruthcoinConfig::default()
    }
}

fn random_report(rng: &mut impl Rng, kind: &DecisionKind) -> f64 {
    match kind {
        DecisionKind::Binary if rng.gen_bool(0.05) => 0.5,
        DecisionKind::Binary => rng.gen_range(0..2) as f64,
        DecisionKind::Scalar { min, max } => {
            if rng.gen_bool(0.05) {
                max + 1.0
            } else {
                rng.gen_range(*min..=*max).round()
            }
        }
    }
}

/// One commit/reveal round with random participation: some holders stay
/// out, some commit and never reveal, stakes are random slices of free VTC.
fn random_round(
    tc: &mut Truthcoin,
    rng: &mut impl Rng,
    ballot: BallotId,
    voters: &[String],
    now: i64,
) -> i64 {
    let b = tc.ballot(ballot).unwrap().clone();
    let mut revealers = vec![];
    for v in voters {
        let held = b.votes.get(v).map_or(0, |x| x.stake);
        let free = tc.ledger.vtc(v);
        if held == 0 && (free == 0 || rng.gen_bool(0.25)) {
            continue;
        }
        let stake = held + if free > 0 { rng.gen_range(0..=free) } else { 0 };
        let reports: BTreeMap<DecisionId, f64> = b
            .decisions
            .iter()
            .map(|d| (*d, random_report(rng, &tc.decision(*d).unwrap().kind)))
            .collect();
        let salt = rng.gen::<[u8; 8]>();
        let c = vote_commitment(ballot, b.round, &reports, &salt);
        tc.commit_vote(v, ballot, c, stake.max(1), now).unwrap();
        if rng.gen_bool(0.9) {
            revealers.push((v.clone(), reports, salt));
        }
    }
    let reveal_at = tc.ballot(ballot).unwrap().commit_deadline;
    for (v, r, s) in revealers {
        tc.reveal_vote(&v, ballot, r, &s, reveal_at).unwrap();
    }
    tc.ballot(ballot).unwrap().reveal_deadline
}

pub fn side_blocks(tc: &mut Truthcoin, ballot: BallotId, vetoes: usize, from: i64) -> i64 {
    for i in 0..WINDOW {
        let flags = if i < vetoes { vec![ballot] } else { vec![] };
        tc.add_side_block("m", from + i as i64, flags);
    }
    from + WINDOW as i64
}

/// Runs random ballots until `target` resolutions. Total VTC is bit-exact constant through 1,000 random resolutions,
/// including holders who never vote, unrevealed commits, out-of-range
/// reports and vetoed revotes. Once a ballot confirms, nothing stays
/// frozen. Returns the revote count and total VTC slashed.
pub fn conservation_run(target: usize, seed: u64) -> (usize, u64) {
    let mut rng = sim_rng(seed);
    let mut resolutions = 0;
    let mut revotes = 0;
    let mut slashed = 0u64;
    while resolutions < target {
        let voters: Vec<String> = (0..rng.gen_range(2..7)).map(|i| format!("v{i}")).collect();
        let alloc: Vec<(String, u64)> = voters
            .iter()
            .map(|v| (v.clone(), rng.gen_range(1..1_000) * UNIT / 7))
            .collect();
        let mut tc = Truthcoin::new(config(), &alloc);
        let total = tc.ledger.total_vtc();
        let mut now = 0;
        for _ in 0..rng.gen_range(1..4) {
            let n_dec = rng.gen_range(1..4);
            for _ in 0..n_dec {
                let kind = if rng.gen_bool(0.6) {
                    DecisionKind::Binary
                } else {
                    DecisionKind::Scalar {
                        min: 0.0,
                        max: 100.0,
                    }
                };
                tc.add_decision("author", "q", kind, now + 1, now).unwrap();
            }
            now += 1;
            let ballot = tc.mature_and_ballot(now).unwrap();
            loop {
                now = random_round(&mut tc, &mut rng, ballot, &voters, now);
                slashed += tc.resolve_ballot(ballot, now).unwrap().total_slashed;
                resolutions += 1;
                assert_eq!(tc.ledger.total_vtc(), total);
                let vetoes = if rng.gen_bool(0.3) {
                    WINDOW / 2 + 1
                } else {
                    rng.gen_range(0..=WINDOW / 2)
                };
                now = side_blocks(&mut tc, ballot, vetoes, now);
                let verdict = tc.close_veto_window(ballot, now).unwrap();
                assert_eq!(tc.ledger.total_vtc(), total);
                if verdict == VetoVerdict::Confirmed {
                    break;
                }
                revotes += 1;
            }
            let frozen: u64 = voters.iter().map(|v| tc.ledger.frozen_vtc(v)).sum();
            assert_eq!(frozen, 0);
        }
    }
    (revotes, slashed)
}

/// Random trading on random one- or two-decision markets, then random
/// outcomes. Every holder's redemption is paid in full from collateral and
/// CSH is only ever created by peg-in.
pub fn solvency_run(markets: usize, seed: u64) {
    let mut rng = sim_rng(seed);
    for _ in 0..markets {
        let traders = ["a", "b", "c", "d"];
        let mut tc = Truthcoin::new(config(), &[("x".to_string(), 100 * UNIT)]);
        tc.ledger.peg_in("author", 10_000 * UNIT);
        for t in traders {
            tc.ledger.peg_in(t, 1_000 * UNIT);
        }
        let minted = tc.ledger.minted_csh();
        let n_dec = rng.gen_range(1..3);
        let decs: Vec<DecisionId> = (0..n_dec)
            .map(|_| {
                tc.add_decision("author", "q", DecisionKind::Binary, 10, 0)
                    .unwrap()
            })
            .collect();
        let b = rng.gen_range(10.0..200.0);
        let m = tc
            .add_market("author", &decs, b, rng.gen_range(0.0..0.05))
            .unwrap();
        let n_states = 1usize << n_dec;
        for _ in 0..rng.gen_range(1..60) {
            let t = traders[rng.gen_range(0..4)];
            let s = rng.gen_range(0..n_states);
            let held = tc.market(m).unwrap().holding(t, s) as i64;
            let delta = if held > 0 && rng.gen_bool(0.3) {
                -rng.gen_range(1..=held)
            } else {
                rng.gen_range(1..50 * UNIT as i64)
            };
            match tc.trade(m, t, s, delta) {
                Ok(_) | Err(TruthcoinError::InsufficientCSH { .. }) => {}
                Err(e) => panic!("{e}"),
            }
            assert_eq!(tc.csh_in_circulation(), minted);
        }
        let ballot = tc.mature_and_ballot(10).unwrap();
        let reports: BTreeMap<DecisionId, f64> = decs
            .iter()
            .map(|d| (*d, rng.gen_range(0..2) as f64))
            .collect();
        let c = vote_commitment(ballot, 0, &reports, b"s");
        tc.commit_vote("x", ballot, c, 100 * UNIT, 10).unwrap();
        tc.reveal_vote("x", ballot, reports.clone(), b"s", 20)
            .unwrap();
        tc.resolve_ballot(ballot, 30).unwrap();
        side_blocks(&mut tc, ballot, 0, 30);
        tc.close_veto_window(ballot, 40).unwrap();

        let values: Vec<f64> = decs.iter().map(|d| reports[d]).collect();
        let payoffs = Market::state_payoffs(&values);
        let market = tc.market(m).unwrap().clone();
        for t in traders {
            let owed: u64 = (0..n_states)
                .map(|s| (market.holding(t, s) as f64 * payoffs[s]).floor() as u64)
                .sum();
            assert_eq!(tc.redeem(m, t).unwrap(), owed);
        }
        assert_eq!(tc.csh_in_circulation(), minted);
    }
}
