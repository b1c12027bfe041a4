//! Counterparty-style meta-chain.
//!
//! Protocol messages ride inside ordinary host transactions, either in a
//! data-carrier output or spread across 1-of-3 multisig outputs whose first
//! two "keys" are data. Every replica folds the host chain in block and
//! transaction order into the same [`MetaState`]; the host never looks at
//! the payload, so a host-valid transaction can still be meta-invalid.
//!
//! Payload = `XOR(magic ‖ tag ‖ fields, txid of the first input's prevout)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datafeed::{Comparator, EpochSeconds};
use crate::simchain::codec::{DecodeError, Decoder, Encoder};
use crate::simchain::wallet::{select_coins, sign_all, WalletError};
use crate::simchain::{
    sha256, Amount, Block, Chain, Digest, KeyPair, LockScript, OutPoint, PubKey,
    StandardnessPolicy, Transaction, TxOut, UtxoSet,
};

pub const MAGIC: &[u8; 8] = b"CNTRPRTY";
pub const XCP: &str = "XCP";
/// Value attached to each multisig data output.
pub const DATA_OUTPUT_VALUE: Amount = 7_800;
/// Data bytes per multisig data key (one length byte, 31 payload bytes).
pub const CHUNK: usize = 31;
/// Fee fractions are expressed in parts per 10^8.
pub const FEE_FRACTION_ONE: u32 = 100_000_000;
pub const DEFAULT_BURN_RATE: u64 = 1_000;

/// An address nobody holds the secret for.
pub const BURN_ADDRESS: PubKey = PubKey(Digest(*b"oraclesim-burn-unspendable-addr!"));

const TAG_SEND: u8 = 0;
const TAG_BROADCAST: u8 = 1;
const TAG_BET: u8 = 2;
const TAG_BURN: u8 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetaError {
    #[error("payload does not start with the protocol magic")]
    BadMagic,
    #[error("payload truncated or malformed: {0}")]
    TruncatedPayload(DecodeError),
    #[error("no broadcast from this feed yet")]
    NoBroadcastYet,
    #[error("stars must be 1 to 5")]
    BadStars,
    #[error(transparent)]
    Wallet(#[from] WalletError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetSide {
    /// Wins when `comparator(value, target)` holds at the deadline.
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetaMessage {
    Send {
        asset: String,
        qty: u64,
        dest: PubKey,
    },
    Broadcast {
        timestamp: EpochSeconds,
        value: f64,
        fee_fraction: u32,
        text: String,
    },
    Bet {
        feed: PubKey,
        comparator: Comparator,
        target: f64,
        deadline: EpochSeconds,
        wager: u64,
        counterwager: u64,
        side: BetSide,
    },
    Burn {
        btc_qty: u64,
    },
}

impl MetaMessage {
    /// Plaintext: magic, tag byte, fixed-width fields.
    pub fn to_plain(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(MAGIC);
        match self {
            MetaMessage::Send { asset, qty, dest } => {
                e.u8(TAG_SEND).str(asset).u64(*qty).digest(&dest.0);
            }
            MetaMessage::Broadcast {
                timestamp,
                value,
                fee_fraction,
                text,
            } => {
                e.u8(TAG_BROADCAST)
                    .i64(*timestamp)
                    .f64(*value)
                    .u32(*fee_fraction)
                    .str(text);
            }
            MetaMessage::Bet {
                feed,
                comparator,
                target,
                deadline,
                wager,
                counterwager,
                side,
            } => {
                e.u8(TAG_BET)
                    .digest(&feed.0)
                    .u8(comparator.tag())
                    .f64(*target)
                    .i64(*deadline)
                    .u64(*wager)
                    .u64(*counterwager)
                    .u8(matches!(side, BetSide::Yes) as u8);
            }
            MetaMessage::Burn { btc_qty } => {
                e.u8(TAG_BURN).u64(*btc_qty);
            }
        }
        e.finish()
    }

    pub fn from_plain(plain: &[u8]) -> Result<Self, MetaError> {
        if plain.len() < MAGIC.len() || &plain[..MAGIC.len()] != MAGIC {
            return Err(MetaError::BadMagic);
        }
        let mut d = Decoder::new(&plain[MAGIC.len()..]);
        let t = MetaError::TruncatedPayload;
        let msg = match d.u8().map_err(t)? {
            TAG_SEND => MetaMessage::Send {
                asset: d.str().map_err(t)?,
                qty: d.u64().map_err(t)?,
                dest: PubKey(d.digest().map_err(t)?),
            },
            TAG_BROADCAST => MetaMessage::Broadcast {
                timestamp: d.i64().map_err(t)?,
                value: d.f64().map_err(t)?,
                fee_fraction: d.u32().map_err(t)?,
                text: d.str().map_err(t)?,
            },
            TAG_BET => {
                let feed = PubKey(d.digest().map_err(t)?);
                let ctag = d.u8().map_err(t)?;
                let comparator = Comparator::from_tag(ctag).ok_or(t(DecodeError::BadTag {
                    what: "comparator",
                    tag: ctag,
                }))?;
                let target = d.f64().map_err(t)?;
                let deadline = d.i64().map_err(t)?;
                let wager = d.u64().map_err(t)?;
                let counterwager = d.u64().map_err(t)?;
                let side = match d.u8().map_err(t)? {
                    1 => BetSide::Yes,
                    0 => BetSide::No,
                    x => {
                        return Err(t(DecodeError::BadTag {
                            what: "bet side",
                            tag: x,
                        }))
                    }
                };
                MetaMessage::Bet {
                    feed,
                    comparator,
                    target,
                    deadline,
                    wager,
                    counterwager,
                    side,
                }
            }
            TAG_BURN => MetaMessage::Burn {
                btc_qty: d.u64().map_err(t)?,
            },
            x => {
                return Err(t(DecodeError::BadTag {
                    what: "message",
                    tag: x,
                }))
            }
        };
        d.finish().map_err(t)?;
        Ok(msg)
    }
}

fn xor_with(data: &[u8], key: &Digest) -> Vec<u8> {
    data.iter()
        .zip(key.0.iter().cycle())
        .map(|(b, k)| b ^ k)
        .collect()
}

pub fn encode(msg: &MetaMessage, key: &Digest) -> Vec<u8> {
    xor_with(&msg.to_plain(), key)
}

pub fn decode(payload: &[u8], key: &Digest) -> Result<MetaMessage, MetaError> {
    MetaMessage::from_plain(&xor_with(payload, key))
}

/// Host outputs carrying an encoded payload: one data carrier if the policy
/// allows it, otherwise 1-of-3 multisig outputs with two data keys each and
/// the sender's key last.
pub fn carrier_outputs(payload: &[u8], sender: &PubKey, policy: &StandardnessPolicy) -> Vec<TxOut> {
    if payload.len() <= policy.max_data_payload {
        return vec![TxOut::new(0, LockScript::data_carrier(payload.to_vec()))];
    }
    let mut keys: Vec<PubKey> = payload
        .chunks(CHUNK)
        .map(|c| {
            let mut k = [0u8; 32];
            k[0] = c.len() as u8;
            k[1..=c.len()].copy_from_slice(c);
            PubKey(Digest(k))
        })
        .collect();
    if keys.len() % 2 == 1 {
        keys.push(PubKey(Digest([0; 32])));
    }
    keys.chunks(2)
        .map(|pair| {
            let lock = LockScript::multisig(1, vec![pair[0], pair[1], *sender]).expect("1-of-3");
            TxOut::new(DATA_OUTPUT_VALUE, lock)
        })
        .collect()
}

/// Reassembles the (still encrypted) payload from a host transaction.
pub fn extract_payload(tx: &Transaction) -> Option<Vec<u8>> {
    for o in &tx.outputs {
        if let LockScript::DataCarrier { payload } = &o.lock {
            return Some(payload.clone());
        }
    }
    let mut out = vec![];
    let mut found = false;
    for o in &tx.outputs {
        if let LockScript::MultiSig { required: 1, keys } = &o.lock {
            if keys.len() != 3 {
                continue;
            }
            for k in &keys[..2] {
                let b = k.0 .0;
                let len = b[0] as usize;
                if len <= CHUNK {
                    out.extend_from_slice(&b[1..=len]);
                    found = true;
                }
            }
        }
    }
    found.then_some(out)
}

/// Builds and signs a host transaction carrying `msg`. A burn message also
/// pays `btc_qty` to the burn address.
pub fn compose(
    utxo: &UtxoSet,
    sender: &KeyPair,
    msg: &MetaMessage,
    policy: &StandardnessPolicy,
    config: &MetaConfig,
    fee: Amount,
    reserved: &BTreeSet<OutPoint>,
) -> Result<Transaction, MetaError> {
    let plain_len = msg.to_plain().len();
    let data_value = if plain_len <= policy.max_data_payload {
        0
    } else {
        plain_len.div_ceil(2 * CHUNK) as Amount * DATA_OUTPUT_VALUE
    };
    let mut extra = vec![];
    if let MetaMessage::Burn { btc_qty } = msg {
        extra.push(TxOut::to_key(*btc_qty, config.burn_address));
    }
    let needed = data_value + extra.iter().map(|o| o.value).sum::<Amount>() + fee;
    let (coins, total) = select_coins(utxo, sender, needed, reserved)?;
    let payload = encode(msg, &coins[0].txid);
    let mut outputs = carrier_outputs(&payload, &sender.public, policy);
    outputs.extend(extra);
    if total > needed {
        outputs.push(TxOut::to_key(total - needed, sender.public));
    }
    let mut tx = Transaction::spending(&coins, outputs, 0);
    sign_all(&mut tx, sender);
    Ok(tx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub burn_address: PubKey,
    /// XCP base units minted per burned satoshi.
    pub burn_rate: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            burn_address: BURN_ADDRESS,
            burn_rate: DEFAULT_BURN_RATE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaReject {
    Undecodable,
    NoSource,
    UnknownAsset,
    ZeroQuantity,
    InsufficientBalance,
    StaleBroadcast,
    BadFeeFraction,
    WrongBurnAddress,
    BurnMismatch,
    BadComparator,
    DeadlinePassed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub height: u64,
    pub tx_index: u32,
    pub txid: Digest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PubKey>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<MetaMessage>,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<MetaReject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastRecord {
    pub height: u64,
    pub timestamp: EpochSeconds,
    pub value: f64,
    pub fee_fraction: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BetStatus {
    Open,
    Matched { counter: Digest },
    Settled { won: bool, payout: u64 },
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetRecord {
    pub seq: u64,
    pub source: PubKey,
    pub feed: PubKey,
    pub comparator: Comparator,
    pub target: f64,
    pub deadline: EpochSeconds,
    pub wager: u64,
    pub counterwager: u64,
    pub side: BetSide,
    pub status: BetStatus,
}

impl BetRecord {
    fn escrowed(&self) -> u64 {
        match self.status {
            BetStatus::Open | BetStatus::Matched { .. } => self.wager,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub balances: BTreeMap<PubKey, BTreeMap<String, u64>>,
    pub feeds: BTreeMap<PubKey, Vec<BroadcastRecord>>,
    pub bets: BTreeMap<Digest, BetRecord>,
    pub log: Vec<LogEntry>,
    pub burned_sat: u64,
    pub issued: u64,
}

impl MetaState {
    pub fn balance(&self, addr: &PubKey, asset: &str) -> u64 {
        self.balances
            .get(addr)
            .and_then(|m| m.get(asset))
            .copied()
            .unwrap_or(0)
    }

    fn credit(&mut self, addr: &PubKey, qty: u64) {
        *self
            .balances
            .entry(*addr)
            .or_default()
            .entry(XCP.to_string())
            .or_default() += qty;
    }

    fn debit(&mut self, addr: &PubKey, qty: u64) -> Result<(), MetaReject> {
        let have = self.balance(addr, XCP);
        if have < qty {
            return Err(MetaReject::InsufficientBalance);
        }
        self.balances
            .get_mut(addr)
            .expect("nonzero balance")
            .insert(XCP.to_string(), have - qty);
        Ok(())
    }

    pub fn latest_broadcast(&self, feed: &PubKey) -> Result<&BroadcastRecord, MetaError> {
        self.feeds
            .get(feed)
            .and_then(|v| v.last())
            .ok_or(MetaError::NoBroadcastYet)
    }

    pub fn total_balances(&self) -> u64 {
        self.balances.values().flat_map(|m| m.values()).sum()
    }

    pub fn total_escrow(&self) -> u64 {
        self.bets.values().map(BetRecord::escrowed).sum()
    }

    /// Σ balances + Σ escrow = Σ issuance.
    pub fn conserved(&self) -> bool {
        self.total_balances() + self.total_escrow() == self.issued
    }

    /// H(canonical JSON).
    pub fn digest(&self) -> Digest {
        sha256(&serde_json::to_vec(self).expect("serializable"))
    }
}

/// Incremental replica: feed it host blocks in order.
#[derive(Debug, Clone, Default)]
pub struct Replica {
    pub config: MetaConfig,
    pub state: MetaState,
    outputs: HashMap<OutPoint, TxOut>,
    next_seq: u64,
}

impl Replica {
    pub fn new(config: MetaConfig) -> Self {
        Replica {
            config,
            ..Default::default()
        }
    }

    pub fn apply_block(&mut self, block: &Block) {
        for (i, tx) in block.txs.iter().enumerate() {
            self.apply_tx(block.height, i as u32, tx);
            let txid = tx.txid();
            for (j, o) in tx.outputs.iter().enumerate() {
                self.outputs
                    .insert(OutPoint::new(txid, j as u32), o.clone());
            }
        }
    }

    fn apply_tx(&mut self, height: u64, tx_index: u32, tx: &Transaction) {
        let Some(payload) = extract_payload(tx) else {
            return;
        };
        let Some(first) = tx.inputs.first() else {
            return;
        };
        let mut entry = LogEntry {
            height,
            tx_index,
            txid: tx.txid(),
            source: None,
            message: None,
            valid: false,
            reason: None,
        };
        let msg = match decode(&payload, &first.outpoint.txid) {
            Ok(m) => m,
            Err(_) => {
                entry.reason = Some(MetaReject::Undecodable);
                self.state.log.push(entry);
                return;
            }
        };
        entry.message = Some(msg.clone());
        let source = match self.outputs.get(&first.outpoint).map(|o| &o.lock) {
            Some(LockScript::PayToKey { key }) => *key,
            _ => {
                entry.reason = Some(MetaReject::NoSource);
                self.state.log.push(entry);
                return;
            }
        };
        entry.source = Some(source);
        let result = match msg {
            MetaMessage::Send { asset, qty, dest } => self.send(&source, &asset, qty, &dest),
            MetaMessage::Broadcast {
                timestamp,
                value,
                fee_fraction,
                text,
            } => self.broadcast(&source, height, timestamp, value, fee_fraction, text),
            MetaMessage::Bet {
                feed,
                comparator,
                target,
                deadline,
                wager,
                counterwager,
                side,
            } => self.bet(
                entry.txid,
                BetRecord {
                    seq: 0,
                    source,
                    feed,
                    comparator,
                    target,
                    deadline,
                    wager,
                    counterwager,
                    side,
                    status: BetStatus::Open,
                },
            ),
            MetaMessage::Burn { btc_qty } => self.burn(&source, tx, btc_qty),
        };
        match result {
            Ok(()) => entry.valid = true,
            Err(r) => entry.reason = Some(r),
        }
        self.state.log.push(entry);
    }

    fn send(
        &mut self,
        src: &PubKey,
        asset: &str,
        qty: u64,
        dest: &PubKey,
    ) -> Result<(), MetaReject> {
        if asset != XCP {
            return Err(MetaReject::UnknownAsset);
        }
        if qty == 0 {
            return Err(MetaReject::ZeroQuantity);
        }
        self.state.debit(src, qty)?;
        self.state.credit(dest, qty);
        Ok(())
    }

    fn burn(&mut self, src: &PubKey, tx: &Transaction, btc_qty: u64) -> Result<(), MetaReject> {
        let paid: u64 = tx
            .outputs
            .iter()
            .filter(|o| o.lock == LockScript::pay_to_key(self.config.burn_address))
            .map(|o| o.value)
            .sum();
        if paid == 0 {
            return Err(MetaReject::WrongBurnAddress);
        }
        if paid != btc_qty {
            return Err(MetaReject::BurnMismatch);
        }
        let minted = paid * self.config.burn_rate;
        self.state.burned_sat += paid;
        self.state.issued += minted;
        self.state.credit(src, minted);
        Ok(())
    }

    fn bet(&mut self, txid: Digest, mut bet: BetRecord) -> Result<(), MetaReject> {
        if bet.comparator == Comparator::EventTrue {
            return Err(MetaReject::BadComparator);
        }
        if bet.wager == 0 || bet.counterwager == 0 {
            return Err(MetaReject::ZeroQuantity);
        }
        if let Ok(last) = self.state.latest_broadcast(&bet.feed) {
            if last.timestamp >= bet.deadline {
                return Err(MetaReject::DeadlinePassed);
            }
        }
        self.state.debit(&bet.source, bet.wager)?;
        bet.seq = self.next_seq;
        self.next_seq += 1;
        let counter = self
            .state
            .bets
            .iter()
            .filter(|(_, o)| {
                o.status == BetStatus::Open
                    && o.feed == bet.feed
                    && o.comparator == bet.comparator
                    && o.target == bet.target
                    && o.deadline == bet.deadline
                    && o.side != bet.side
                    && o.wager == bet.counterwager
                    && o.counterwager == bet.wager
            })
            .min_by_key(|(_, o)| o.seq)
            .map(|(id, _)| *id);
        if let Some(c) = counter {
            self.state.bets.get_mut(&c).expect("found").status =
                BetStatus::Matched { counter: txid };
            bet.status = BetStatus::Matched { counter: c };
        }
        self.state.bets.insert(txid, bet);
        Ok(())
    }

    fn broadcast(
        &mut self,
        feed: &PubKey,
        height: u64,
        timestamp: EpochSeconds,
        value: f64,
        fee_fraction: u32,
        text: String,
    ) -> Result<(), MetaReject> {
        if fee_fraction > FEE_FRACTION_ONE {
            return Err(MetaReject::BadFeeFraction);
        }
        if let Ok(last) = self.state.latest_broadcast(feed) {
            if timestamp <= last.timestamp {
                return Err(MetaReject::StaleBroadcast);
            }
        }
        self.state
            .feeds
            .entry(*feed)
            .or_default()
            .push(BroadcastRecord {
                height,
                timestamp,
                value,
                fee_fraction,
                text,
            });
        self.settle(feed, timestamp, value, fee_fraction);
        Ok(())
    }

    /// Settles every bet on `feed` whose deadline has been reached.
    fn settle(&mut self, feed: &PubKey, timestamp: EpochSeconds, value: f64, fee_fraction: u32) {
        let mut due: Vec<(u64, Digest)> = self
            .state
            .bets
            .iter()
            .filter(|(_, b)| &b.feed == feed && b.deadline <= timestamp && b.escrowed() > 0)
            .map(|(id, b)| (b.seq, *id))
            .collect();
        due.sort();
        for (_, id) in due {
            let bet = self.state.bets[&id].clone();
            match bet.status {
                BetStatus::Open => {
                    self.state.credit(&bet.source, bet.wager);
                    self.state.bets.get_mut(&id).expect("due").status = BetStatus::Refunded;
                }
                BetStatus::Matched { counter } => {
                    let other = self.state.bets[&counter].clone();
                    let holds = bet.comparator.eval_number(value, bet.target);
                    let bet_wins = holds == (bet.side == BetSide::Yes);
                    let pot = bet.wager + other.wager;
                    let fee =
                        (pot as u128 * fee_fraction as u128 / FEE_FRACTION_ONE as u128) as u64;
                    let (winner, loser) = if bet_wins {
                        (id, counter)
                    } else {
                        (counter, id)
                    };
                    let winner_addr = self.state.bets[&winner].source;
                    self.state.credit(&winner_addr, pot - fee);
                    self.state.credit(feed, fee);
                    self.state.bets.get_mut(&winner).expect("due").status = BetStatus::Settled {
                        won: true,
                        payout: pot - fee,
                    };
                    self.state.bets.get_mut(&loser).expect("due").status = BetStatus::Settled {
                        won: false,
                        payout: 0,
                    };
                }
                _ => {}
            }
        }
    }
}

/// Folds the whole host chain into a fresh meta state.
pub fn replay(chain: &Chain, config: &MetaConfig) -> MetaState {
    let mut r = Replica::new(config.clone());
    for b in chain.blocks() {
        r.apply_block(b);
    }
    r.state
}

/// Host coins outside the burn address and data carriers.
pub fn host_circulating_supply(utxo: &UtxoSet, config: &MetaConfig) -> Amount {
    utxo.total_value() - utxo.unspendable_value() - utxo.balance_of(&config.burn_address)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedRating {
    pub feed: PubKey,
    pub rater: String,
    pub stars: u8,
    pub comment: String,
}

/// Off-consensus reputation log for feed addresses.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FeedRatings {
    ratings: Vec<FeedRating>,
}

impl FeedRatings {
    pub fn rate(
        &mut self,
        feed: PubKey,
        rater: impl Into<String>,
        stars: u8,
        comment: impl Into<String>,
    ) -> Result<FeedRating, MetaError> {
        if !(1..=5).contains(&stars) {
            return Err(MetaError::BadStars);
        }
        let r = FeedRating {
            feed,
            rater: rater.into(),
            stars,
            comment: comment.into(),
        };
        self.ratings.push(r.clone());
        Ok(r)
    }

    pub fn average(&self, feed: &PubKey) -> Option<f64> {
        let s: Vec<u8> = self
            .ratings
            .iter()
            .filter(|r| &r.feed == feed)
            .map(|r| r.stars)
            .collect();
        (!s.is_empty()).then(|| s.iter().map(|x| *x as f64).sum::<f64>() / s.len() as f64)
    }

    pub fn all(&self) -> &[FeedRating] {
        &self.ratings
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simchain::{keygen, PolicyEra, COIN};

    fn policy() -> StandardnessPolicy {
        StandardnessPolicy::for_era(PolicyEra::V090)
    }

    fn key() -> Digest {
        sha256(b"some prevout")
    }

    fn bet_msg() -> MetaMessage {
        MetaMessage::Bet {
            feed: keygen(b"feed").unwrap().public,
            comparator: Comparator::Ge,
            target: 400.0,
            deadline: 1_400_000_000,
            wager: 5 * COIN,
            counterwager: 5 * COIN,
            side: BetSide::Yes,
        }
    }

    #[test]
    fn codec_round_trip() {
        let msgs = [
            MetaMessage::Send {
                asset: XCP.into(),
                qty: 42,
                dest: keygen(b"d").unwrap().public,
            },
            MetaMessage::Broadcast {
                timestamp: 7,
                value: 404.5,
                fee_fraction: 1_000_000,
                text: "BTC-USD".into(),
            },
            bet_msg(),
            MetaMessage::Burn { btc_qty: COIN },
        ];
        for m in msgs {
            assert_eq!(decode(&encode(&m, &key()), &key()), Ok(m));
        }
    }

    #[test]
    fn wrong_key_scrambles_magic() {
        let p = encode(&bet_msg(), &key());
        assert_eq!(decode(&p, &sha256(b"other")), Err(MetaError::BadMagic));
        assert!(!(&p[..8] == MAGIC));
    }

    #[test]
    fn truncated_payload() {
        let p = encode(&bet_msg(), &key());
        assert!(matches!(
            decode(&p[..20], &key()),
            Err(MetaError::TruncatedPayload(_))
        ));
    }

    #[test]
    fn large_payload_goes_multisig() {
        let p = encode(&bet_msg(), &key());
        assert!(p.len() > 40);
        let sender = keygen(b"s").unwrap().public;
        let outs = carrier_outputs(&p, &sender, &policy());
        assert!(outs
            .iter()
            .all(|o| matches!(o.lock, LockScript::MultiSig { .. })));
        let tx = Transaction {
            outputs: outs,
            ..Default::default()
        };
        assert_eq!(extract_payload(&tx), Some(p.clone()));
        let old = StandardnessPolicy::for_era(PolicyEra::Test2013);
        assert!(matches!(
            carrier_outputs(&p, &sender, &old)[0].lock,
            LockScript::DataCarrier { .. }
        ));
    }

    #[test]
    fn small_payload_uses_data_carrier() {
        let p = encode(&MetaMessage::Burn { btc_qty: 1 }, &key());
        let outs = carrier_outputs(&p, &keygen(b"s").unwrap().public, &policy());
        assert_eq!(outs.len(), 1);
        assert!(matches!(outs[0].lock, LockScript::DataCarrier { .. }));
    }

    #[test]
    fn ratings() {
        let mut r = FeedRatings::default();
        let f = keygen(b"feed").unwrap().public;
        assert_eq!(r.average(&f), None);
        r.rate(f, "xchain", 5, "known and trusted address").unwrap();
        assert_eq!(r.average(&f), Some(5.0));
        assert_eq!(r.rate(f, "x", 0, ""), Err(MetaError::BadStars));
        assert_eq!(r.rate(f, "x", 6, ""), Err(MetaError::BadStars));
    }
}
