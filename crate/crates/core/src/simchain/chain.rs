use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::Encoder;
use super::policy::{classify, Standardness, StandardnessPolicy};
use super::validate::{validate_tx, TxError, UtxoSet};
use super::{sha256, Amount, Digest, KeyPair, KeyRegistry, OutPoint, PubKey, Transaction, TxOut};

pub const DEFAULT_EXPIRY_BLOCKS: u64 = 100;
pub const DEFAULT_BLOCK_BUDGET: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Miner {
    pub id: String,
    pub hashrate_share: f64,
    #[serde(default)]
    pub accepts_nonstandard: bool,
    #[serde(default = "default_budget")]
    pub block_size_budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_BLOCK_BUDGET
}

impl Miner {
    pub fn new(id: impl Into<String>, hashrate_share: f64, accepts_nonstandard: bool) -> Self {
        Miner {
            id: id.into(),
            hashrate_share,
            accepts_nonstandard,
            block_size_budget: DEFAULT_BLOCK_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MiningError {
    #[error("miner table is empty")]
    NoMiners,
    #[error("hashrate shares must each lie in (0,1] and sum to 1, got sum {0}")]
    BadHashrate(f64),
}

/// Validated miner table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Miner>", into = "Vec<Miner>")]
pub struct MinerTable(Vec<Miner>);

impl MinerTable {
    pub fn new(miners: Vec<Miner>) -> Result<Self, MiningError> {
        if miners.is_empty() {
            return Err(MiningError::NoMiners);
        }
        let sum: f64 = miners.iter().map(|m| m.hashrate_share).sum();
        let shares_ok = miners
            .iter()
            .all(|m| m.hashrate_share > 0.0 && m.hashrate_share <= 1.0);
        if !shares_ok || (sum - 1.0).abs() > 1e-12 {
            return Err(MiningError::BadHashrate(sum));
        }
        Ok(MinerTable(miners))
    }

    pub fn miners(&self) -> &[Miner] {
        &self.0
    }

    /// Draws the block winner. `u` is uniform in [0,1), taken from the top
    /// 53 bits of one `next_u64` call.
    pub fn draw(&self, rng: &mut dyn RngCore) -> &Miner {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let mut acc = 0.0;
        for m in &self.0 {
            acc += m.hashrate_share;
            if u < acc {
                return m;
            }
        }
        self.0.last().expect("non-empty by construction")
    }
}

impl TryFrom<Vec<Miner>> for MinerTable {
    type Error = MiningError;

    fn try_from(v: Vec<Miner>) -> Result<Self, Self::Error> {
        MinerTable::new(v)
    }
}

impl From<MinerTable> for Vec<Miner> {
    fn from(t: MinerTable) -> Self {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent: Digest,
    pub miner_id: String,
    pub txs: Vec<Transaction>,
    pub fees: Amount,
}

impl Block {
    pub fn hash(&self) -> Digest {
        let mut e = Encoder::new();
        e.u64(self.height)
            .digest(&self.parent)
            .str(&self.miner_id)
            .u64(self.fees)
            .u32(self.txs.len() as u32);
        for tx in &self.txs {
            e.digest(&tx.txid());
        }
        sha256(&e.finish())
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.u64(self.height)
            .digest(&self.parent)
            .str(&self.miner_id)
            .u64(self.fees)
            .u32(self.txs.len() as u32);
        for tx in &self.txs {
            tx.encode(e);
        }
    }
}

/// The host ledger: blocks, UTXO set and the signature registry.
#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
    utxo: UtxoSet,
    keys: KeyRegistry,
    genesis_supply: Amount,
    fees_total: Amount,
}

impl Chain {
    /// Builds height 0 with one allocation transaction (no inputs).
    pub fn genesis(allocations: &[(PubKey, Amount)]) -> Self {
        let tx = Transaction {
            inputs: vec![],
            outputs: allocations
                .iter()
                .map(|(k, v)| TxOut::to_key(*v, *k))
                .collect(),
            locktime: 0,
        };
        let mut utxo = UtxoSet::new();
        utxo.apply(&tx, 0);
        let genesis_supply = tx.output_value();
        Chain {
            blocks: vec![Block {
                height: 0,
                parent: Digest::ZERO,
                miner_id: "genesis".into(),
                txs: vec![tx],
                fees: 0,
            }],
            utxo,
            keys: KeyRegistry::new(),
            genesis_supply,
            fees_total: 0,
        }
    }

    pub fn tip_height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().expect("genesis").hash()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn utxo(&self) -> &UtxoSet {
        &self.utxo
    }

    pub fn keys(&self) -> &KeyRegistry {
        &self.keys
    }

    pub fn keys_mut(&mut self) -> &mut KeyRegistry {
        &mut self.keys
    }

    pub fn register_key(&mut self, pair: &KeyPair) {
        self.keys.register(pair);
    }

    pub fn genesis_supply(&self) -> Amount {
        self.genesis_supply
    }

    pub fn fees_total(&self) -> Amount {
        self.fees_total
    }

    pub fn balance_of(&self, key: &PubKey) -> Amount {
        self.utxo.balance_of(key)
    }

    /// Validates `tx` for inclusion in the next block.
    pub fn validate(&self, tx: &Transaction) -> Result<Amount, TxError> {
        validate_tx(tx, &self.utxo, &self.keys, self.tip_height() + 1)
    }

    /// Appends a block with exactly these transactions, in order.
    pub fn append_block(
        &mut self,
        miner_id: &str,
        txs: Vec<Transaction>,
    ) -> Result<&Block, (usize, TxError)> {
        let height = self.tip_height() + 1;
        let mut working = self.utxo.clone();
        let mut fees = 0;
        for (i, tx) in txs.iter().enumerate() {
            fees += validate_tx(tx, &working, &self.keys, height).map_err(|e| (i, e))?;
            working.apply(tx, height);
        }
        Ok(self.commit(miner_id, txs, fees, Some(working)))
    }

    fn commit(
        &mut self,
        miner_id: &str,
        txs: Vec<Transaction>,
        fees: Amount,
        utxo: Option<UtxoSet>,
    ) -> &Block {
        let block = Block {
            height: self.tip_height() + 1,
            parent: self.tip_hash(),
            miner_id: miner_id.to_string(),
            txs,
            fees,
        };
        if let Some(u) = utxo {
            self.utxo = u;
        }
        self.fees_total += fees;
        self.blocks.push(block);
        self.blocks.last().unwrap()
    }

    /// Height of the block containing `txid`, if confirmed.
    pub fn confirmation_height(&self, txid: &Digest) -> Option<u64> {
        self.blocks
            .iter()
            .find(|b| b.txs.iter().any(|t| t.txid() == *txid))
            .map(|b| b.height)
    }

    pub fn dump_json(&self) -> serde_json::Value {
        serde_json::json!({
            "tip_height": self.tip_height(),
            "tip_hash": self.tip_hash(),
            "blocks": self.blocks,
            "utxo": self.utxo.iter().map(|(op, c)| serde_json::json!({
                "outpoint": op,
                "value": c.output.value,
                "lock": c.output.lock,
                "height": c.height,
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Rejection {
    #[error("invalid transaction: {0}")]
    Invalid(TxError),
    #[error("transaction already in the pool")]
    Duplicate,
    #[error("transaction conflicts with a pooled transaction")]
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub tx: Transaction,
    pub txid: Digest,
    pub standardness: Standardness,
    /// Chain tip height when the transaction entered the pool.
    pub arrival_height: u64,
    pub fee: Amount,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MempoolConfig {
    pub expiry_blocks: u64,
}

impl Default for MempoolConfig {
    fn default() -> Self {
        MempoolConfig {
            expiry_blocks: DEFAULT_EXPIRY_BLOCKS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mempool {
    policy: StandardnessPolicy,
    config: MempoolConfig,
    entries: BTreeMap<Digest, PoolEntry>,
    spends: BTreeMap<OutPoint, Digest>,
}

impl Mempool {
    pub fn new(policy: StandardnessPolicy, config: MempoolConfig) -> Self {
        Mempool {
            policy,
            config,
            entries: BTreeMap::new(),
            spends: BTreeMap::new(),
        }
    }

    pub fn policy(&self) -> &StandardnessPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, txid: &Digest) -> Option<&PoolEntry> {
        self.entries.get(txid)
    }

    pub fn contains(&self, txid: &Digest) -> bool {
        self.entries.contains_key(txid)
    }

    /// Outpoints already claimed by pooled transactions.
    pub fn reserved(&self) -> BTreeSet<OutPoint> {
        self.spends.keys().copied().collect()
    }

    /// Admits a valid transaction, standard or not. Mining, not admission,
    /// is gated on standardness.
    pub fn submit(&mut self, chain: &Chain, tx: Transaction) -> Result<Digest, Rejection> {
        let txid = tx.txid();
        if self.entries.contains_key(&txid) {
            return Err(Rejection::Duplicate);
        }
        if tx
            .inputs
            .iter()
            .any(|i| self.spends.contains_key(&i.outpoint))
        {
            return Err(Rejection::Conflict);
        }
        let fee = chain.validate(&tx).map_err(Rejection::Invalid)?;
        let entry = PoolEntry {
            standardness: classify(&tx, &self.policy),
            arrival_height: chain.tip_height(),
            fee,
            size: tx.size(),
            txid,
            tx,
        };
        for i in &entry.tx.inputs {
            self.spends.insert(i.outpoint, txid);
        }
        self.entries.insert(txid, entry);
        Ok(txid)
    }

    fn remove(&mut self, txid: &Digest) -> Option<PoolEntry> {
        let entry = self.entries.remove(txid)?;
        for i in &entry.tx.inputs {
            self.spends.remove(&i.outpoint);
        }
        Some(entry)
    }

    /// Drops entries that no longer validate or have outlived the expiry.
    fn prune(&mut self, chain: &Chain) -> (Vec<Digest>, Vec<Digest>) {
        let height = chain.tip_height();
        let mut expired = vec![];
        let mut evicted = vec![];
        let ids: Vec<Digest> = self.entries.keys().copied().collect();
        for id in ids {
            let entry = &self.entries[&id];
            if chain.validate(&entry.tx).is_err() {
                evicted.push(id);
            } else if height.saturating_sub(entry.arrival_height) >= self.config.expiry_blocks {
                expired.push(id);
            }
        }
        for id in expired.iter().chain(&evicted) {
            self.remove(id);
        }
        (expired, evicted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inclusion {
    pub txid: Digest,
    pub delay: u64,
    pub standard: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineOutcome {
    pub height: u64,
    pub miner_id: String,
    pub included: Vec<Inclusion>,
    pub expired: Vec<Digest>,
    pub evicted: Vec<Digest>,
}

/// Produces the next block: the winner is drawn by hashrate, then fills its
/// budget greedily by fee per byte from the transactions it is willing to
/// mine.
pub fn mine_next(
    chain: &mut Chain,
    mempool: &mut Mempool,
    miners: &MinerTable,
    rng: &mut dyn RngCore,
) -> Result<MineOutcome, MiningError> {
    let miner = miners.draw(rng).clone();
    let height = chain.tip_height() + 1;

    let mut candidates: Vec<&PoolEntry> = mempool
        .entries
        .values()
        .filter(|e| miner.accepts_nonstandard || e.standardness.is_standard())
        .collect();
    candidates.sort_by(|a, b| {
        let lhs = a.fee as u128 * b.size as u128;
        let rhs = b.fee as u128 * a.size as u128;
        rhs.cmp(&lhs)
            .then(a.arrival_height.cmp(&b.arrival_height))
            .then(a.txid.cmp(&b.txid))
    });

    // Most draws in a non-standard-heavy pool find nothing to mine, so the
    // UTXO copy is made only once there is a candidate.
    let mut working: Option<UtxoSet> = None;
    let mut used = 0usize;
    let mut fees = 0;
    let mut txs = vec![];
    let mut included = vec![];
    for entry in candidates {
        if used + entry.size > miner.block_size_budget {
            continue;
        }
        let w = working.get_or_insert_with(|| chain.utxo.clone());
        if let Ok(fee) = validate_tx(&entry.tx, w, &chain.keys, height) {
            w.apply(&entry.tx, height);
            used += entry.size;
            fees += fee;
            txs.push(entry.tx.clone());
            included.push(Inclusion {
                txid: entry.txid,
                delay: height - entry.arrival_height,
                standard: entry.standardness.is_standard(),
            });
        }
    }
    for inc in &included {
        mempool.remove(&inc.txid);
    }
    chain.commit(&miner.id, txs, fees, working);
    let (expired, evicted) = mempool.prune(chain);
    Ok(MineOutcome {
        height,
        miner_id: miner.id,
        included,
        expired,
        evicted,
    })
}
