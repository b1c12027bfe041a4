use std::collections::BTreeMap;

use serde::Serialize;

use super::{
    Address, DecisionId, DecisionKind, DecisionState, ResolvedValue, Truthcoin, TruthcoinError,
};
use crate::datafeed::EpochSeconds;
use crate::simchain::codec::Encoder;
use crate::simchain::{sha256, Digest};

pub type BallotId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotPhase {
    Voting,
    Resolved,
    Confirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vote {
    /// VTC frozen for this ballot. Carries over into revotes.
    pub stake: u64,
    pub commitment: Option<Digest>,
    pub reveal: Option<BTreeMap<DecisionId, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub round: u32,
    pub outcomes: BTreeMap<DecisionId, ResolvedValue>,
    /// Stake that revealed a report, per decision.
    pub participation: BTreeMap<DecisionId, u64>,
    pub frozen_deltas: BTreeMap<Address, i64>,
    pub free_deltas: BTreeMap<Address, i64>,
    pub total_slashed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ballot {
    pub id: BallotId,
    pub decisions: Vec<DecisionId>,
    pub round: u32,
    pub phase: BallotPhase,
    pub commit_deadline: EpochSeconds,
    pub reveal_deadline: EpochSeconds,
    pub resolved_at: Option<EpochSeconds>,
    pub votes: BTreeMap<Address, Vote>,
    pub resolutions: Vec<Resolution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SideBlock {
    pub height: u64,
    pub miner_id: String,
    pub time: EpochSeconds,
    pub veto_flags: Vec<BallotId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VetoVerdict {
    Confirmed,
    Revote,
}

/// Revote requires strictly more than half of the window.
pub fn veto_verdict(vetoes: usize, window: usize) -> VetoVerdict {
    if vetoes * 2 > window {
        VetoVerdict::Revote
    } else {
        VetoVerdict::Confirmed
    }
}

pub fn vote_commitment(
    ballot: BallotId,
    round: u32,
    reports: &BTreeMap<DecisionId, f64>,
    salt: &[u8],
) -> Digest {
    let mut e = Encoder::new();
    e.raw(b"truthcoin/vote");
    e.u64(ballot);
    e.u32(round);
    e.u32(reports.len() as u32);
    for (d, v) in reports {
        e.u64(*d);
        e.f64(*v);
    }
    e.bytes(salt);
    sha256(&e.finish())
}

fn valid_report(kind: &DecisionKind, v: f64) -> bool {
    match kind {
        DecisionKind::Binary => v == 0.0 || v == 1.0,
        DecisionKind::Scalar { .. } => v.is_finite() && kind.in_range(v),
    }
}

/// Binary: stake-weighted majority, tie is unresolvable. Scalar: lower
/// stake-weighted median.
fn aggregate(kind: &DecisionKind, reports: &[(f64, u64)]) -> ResolvedValue {
    let total: u128 = reports.iter().map(|r| r.1 as u128).sum();
    if total == 0 {
        return ResolvedValue::Unresolvable;
    }
    match kind {
        DecisionKind::Binary => {
            let yes: u128 = reports
                .iter()
                .filter(|r| r.0 == 1.0)
                .map(|r| r.1 as u128)
                .sum();
            let no = total - yes;
            match yes.cmp(&no) {
                std::cmp::Ordering::Greater => ResolvedValue::Value(1.0),
                std::cmp::Ordering::Less => ResolvedValue::Value(0.0),
                std::cmp::Ordering::Equal => ResolvedValue::Unresolvable,
            }
        }
        DecisionKind::Scalar { min, max } => {
            let mut sorted = reports.to_vec();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cum = 0u128;
            for (v, w) in &sorted {
                cum += *w as u128;
                if cum * 2 >= total {
                    return ResolvedValue::Value(v.clamp(*min, *max));
                }
            }
            unreachable!("cumulative weight reaches total")
        }
    }
}

impl Truthcoin {
    /// Collects every decision whose maturity time has passed into a new
    /// ballot. Markets on them stop trading.
    pub fn mature_and_ballot(&mut self, now: EpochSeconds) -> Option<BallotId> {
        let mature: Vec<DecisionId> = self
            .decisions
            .values()
            .filter(|d| d.state == DecisionState::Open && d.maturity_time <= now)
            .map(|d| d.id)
            .collect();
        if mature.is_empty() {
            return None;
        }
        let id = self.fresh_id();
        for d in &mature {
            self.decisions.get_mut(d).expect("listed").state = DecisionState::Mature { ballot: id };
        }
        self.ballots.insert(
            id,
            Ballot {
                id,
                decisions: mature,
                round: 0,
                phase: BallotPhase::Voting,
                commit_deadline: now + self.config.commit_period,
                reveal_deadline: now + self.config.commit_period + self.config.reveal_period,
                resolved_at: None,
                votes: BTreeMap::new(),
                resolutions: vec![],
            },
        );
        Some(id)
    }

    fn voting_ballot(&mut self, id: BallotId) -> Result<&mut Ballot, TruthcoinError> {
        let b = self
            .ballots
            .get_mut(&id)
            .ok_or(TruthcoinError::UnknownBallot(id))?;
        if b.phase != BallotPhase::Voting {
            return Err(TruthcoinError::WrongPhase(b.phase));
        }
        Ok(b)
    }

    /// Records a commitment and freezes `stake`. A voter already holding
    /// stake in this ballot (a revote, or a re-commit) only freezes the
    /// difference.
    pub fn commit_vote(
        &mut self,
        voter: &str,
        ballot: BallotId,
        commitment: Digest,
        stake: u64,
        now: EpochSeconds,
    ) -> Result<(), TruthcoinError> {
        let b = self.voting_ballot(ballot)?;
        if now >= b.commit_deadline {
            return Err(TruthcoinError::CommitClosed);
        }
        let held = b.votes.get(voter).map(|v| v.stake).unwrap_or(0);
        let extra = stake.saturating_sub(held);
        self.ledger.freeze(voter, extra)?;
        let b = self.ballots.get_mut(&ballot).expect("checked");
        let v = b.votes.entry(voter.to_string()).or_insert(Vote {
            stake: 0,
            commitment: None,
            reveal: None,
        });
        v.stake += extra;
        v.commitment = Some(commitment);
        v.reveal = None;
        Ok(())
    }

    pub fn reveal_vote(
        &mut self,
        voter: &str,
        ballot: BallotId,
        reports: BTreeMap<DecisionId, f64>,
        salt: &[u8],
        now: EpochSeconds,
    ) -> Result<(), TruthcoinError> {
        let b = self.voting_ballot(ballot)?;
        if now < b.commit_deadline || now >= b.reveal_deadline {
            return Err(TruthcoinError::RevealNotOpen);
        }
        let (id, round) = (b.id, b.round);
        let v = b.votes.get_mut(voter).ok_or(TruthcoinError::NoCommitment)?;
        let Some(c) = v.commitment else {
            return Err(TruthcoinError::NoCommitment);
        };
        if vote_commitment(id, round, &reports, salt) != c {
            return Err(TruthcoinError::RevealMismatch);
        }
        v.reveal = Some(reports);
        Ok(())
    }

    /// Aggregates revealed reports, slashes by distance from the outcome and
    /// hands the slashed VTC to accurate voters.
    pub fn resolve_ballot(
        &mut self,
        ballot: BallotId,
        now: EpochSeconds,
    ) -> Result<&Resolution, TruthcoinError> {
        let b = self.voting_ballot(ballot)?;
        if now < b.reveal_deadline {
            return Err(TruthcoinError::RevealOpen);
        }
        let b = b.clone();
        let total_vtc = self.ledger.total_vtc() as u128;
        let k = b.decisions.len() as f64;
        let sigma = self.config.slash_severity;

        // Stake basis: frozen ballot stake for committers, free VTC for
        // holders who did not commit.
        let mut basis: BTreeMap<Address, (u64, bool)> = BTreeMap::new();
        for (a, v) in &b.votes {
            basis.insert(a.clone(), (v.stake, true));
        }
        for (a, _) in self.ledger.vtc_holders() {
            if !basis.contains_key(a) {
                let free = self.ledger.vtc(a);
                if free > 0 {
                    basis.insert(a.clone(), (free, false));
                }
            }
        }

        let mut outcomes = BTreeMap::new();
        let mut participation = BTreeMap::new();
        let mut frozen_deltas: BTreeMap<Address, i64> = BTreeMap::new();
        let mut free_deltas: BTreeMap<Address, i64> = BTreeMap::new();
        let mut total_slashed = 0u64;

        for d in &b.decisions {
            let kind = self.decisions[d].kind;
            let mut part = 0u64;
            let mut valid = vec![];
            for v in b.votes.values() {
                if let Some(r) = v.reveal.as_ref().and_then(|m| m.get(d)) {
                    part += v.stake;
                    if valid_report(&kind, *r) {
                        valid.push((*r, v.stake));
                    }
                }
            }
            participation.insert(*d, part);
            let quorum = part as u128 * 10_000 >= self.config.quorum_bps as u128 * total_vtc;
            let outcome = if quorum {
                aggregate(&kind, &valid)
            } else {
                ResolvedValue::Unresolvable
            };
            outcomes.insert(*d, outcome);
            let ResolvedValue::Value(x) = outcome else {
                continue;
            };

            let mut slashes: Vec<(&Address, u64, u64)> = vec![];
            for (a, (stake, committed)) in &basis {
                let report = if *committed {
                    b.votes[a].reveal.as_ref().and_then(|m| m.get(d)).copied()
                } else {
                    None
                };
                let dist = match report {
                    Some(r) if valid_report(&kind, r) => ((r - x).abs() / kind.range()).min(1.0),
                    _ => 1.0,
                };
                let slash = ((*stake as f64 * dist * sigma) / k).floor() as u64;
                let lost = (*stake as f64 * dist).floor() as u64;
                slashes.push((a, slash, stake - lost.min(*stake)));
            }
            let weight: u128 = slashes.iter().map(|s| s.2 as u128).sum();
            if weight == 0 {
                continue;
            }
            let pool: u64 = slashes.iter().map(|s| s.1).sum();
            let mut paid = 0u64;
            let mut best: Option<(&Address, u64)> = None;
            for (a, slash, w) in &slashes {
                let gain = (pool as u128 * *w as u128 / weight) as u64;
                paid += gain;
                let net = gain as i64 - *slash as i64;
                let committed = basis[*a].1;
                let map = if committed {
                    &mut frozen_deltas
                } else {
                    &mut free_deltas
                };
                *map.entry((*a).clone()).or_default() += net;
                if *w > 0 && best.is_none_or(|(_, bw)| *w > bw) {
                    best = Some((a, *w));
                }
            }
            let (winner, _) = best.expect("positive weight");
            let remainder = (pool - paid) as i64;
            let committed = basis[winner].1;
            let map = if committed {
                &mut frozen_deltas
            } else {
                &mut free_deltas
            };
            *map.entry(winner.clone()).or_default() += remainder;
            total_slashed += pool;
        }

        frozen_deltas.retain(|_, v| *v != 0);
        free_deltas.retain(|_, v| *v != 0);
        for (a, dlt) in &frozen_deltas {
            self.ledger.adjust_frozen(a, *dlt);
        }
        for (a, dlt) in &free_deltas {
            self.ledger.adjust_free(a, *dlt);
        }
        for (d, o) in &outcomes {
            self.decisions.get_mut(d).expect("ballot member").state =
                DecisionState::Resolved { outcome: *o };
        }
        let res = Resolution {
            round: b.round,
            outcomes,
            participation,
            frozen_deltas,
            free_deltas,
            total_slashed,
        };
        let b = self.ballots.get_mut(&ballot).expect("checked");
        b.phase = BallotPhase::Resolved;
        b.resolved_at = Some(now);
        b.resolutions.push(res);
        Ok(b.resolutions.last().expect("pushed"))
    }

    pub fn add_side_block(
        &mut self,
        miner_id: &str,
        time: EpochSeconds,
        veto_flags: Vec<BallotId>,
    ) -> u64 {
        let height = self.side_blocks.len() as u64;
        self.side_blocks.push(SideBlock {
            height,
            miner_id: miner_id.to_string(),
            time,
            veto_flags,
        });
        height
    }

    /// Veto count over the window and how many window blocks exist so far.
    pub fn veto_tally(&self, ballot: BallotId) -> Result<(usize, usize), TruthcoinError> {
        let b = self.ballot(ballot)?;
        let Some(at) = b.resolved_at.filter(|_| b.phase == BallotPhase::Resolved) else {
            return Err(TruthcoinError::WrongPhase(b.phase));
        };
        let start = at + self.config.waiting_period;
        let window: Vec<&SideBlock> = self
            .side_blocks
            .iter()
            .filter(|s| s.time >= start)
            .take(self.config.veto_window_blocks)
            .collect();
        let vetoes = window
            .iter()
            .filter(|s| s.veto_flags.contains(&ballot))
            .count();
        Ok((vetoes, window.len()))
    }

    /// Closes the veto window. Confirmed unfreezes stakes; Revote undoes the
    /// reallocation and opens a new voting round with stakes still frozen.
    pub fn close_veto_window(
        &mut self,
        ballot: BallotId,
        now: EpochSeconds,
    ) -> Result<VetoVerdict, TruthcoinError> {
        let (vetoes, seen) = self.veto_tally(ballot)?;
        let w = self.config.veto_window_blocks;
        if seen < w {
            return Err(TruthcoinError::WindowOpen);
        }
        let verdict = veto_verdict(vetoes, w);
        let (commit_p, reveal_p) = (self.config.commit_period, self.config.reveal_period);
        let b = self.ballots.get_mut(&ballot).expect("checked");
        let res = b.resolutions.last().expect("resolved").clone();
        match verdict {
            VetoVerdict::Confirmed => {
                b.phase = BallotPhase::Confirmed;
                for (a, v) in &b.votes {
                    let net = v.stake as i64 + res.frozen_deltas.get(a).copied().unwrap_or(0);
                    self.ledger.unfreeze(a, net as u64);
                }
                for (d, o) in &res.outcomes {
                    self.decisions.get_mut(d).expect("member").state =
                        DecisionState::Confirmed { outcome: *o };
                }
            }
            VetoVerdict::Revote => {
                for (a, dlt) in &res.frozen_deltas {
                    self.ledger.adjust_frozen(a, -dlt);
                }
                for (a, dlt) in &res.free_deltas {
                    self.ledger.adjust_free(a, -dlt);
                }
                b.phase = BallotPhase::Voting;
                b.round += 1;
                b.resolved_at = None;
                b.commit_deadline = now + commit_p;
                b.reveal_deadline = now + commit_p + reveal_p;
                for v in b.votes.values_mut() {
                    v.commitment = None;
                    v.reveal = None;
                }
                for d in &b.decisions {
                    self.decisions.get_mut(d).expect("member").state =
                        DecisionState::Revote { ballot };
                }
            }
        }
        Ok(verdict)
    }
}
