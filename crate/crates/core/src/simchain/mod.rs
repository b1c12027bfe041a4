//! Minimal deterministic UTXO ledger.
//!
//! Lock scripts come from a closed template set, relay standardness is a
//! separate policy layer, and blocks are produced by a hashrate-weighted
//! miner draw from an explicitly seeded generator.

mod chain;
pub mod codec;
mod digest;
mod keys;
pub mod policy;
mod script;
mod tx;
mod validate;
pub mod wallet;

pub use chain::{
    mine_next, Block, Chain, Inclusion, Mempool, MempoolConfig, MineOutcome, Miner, MinerTable,
    MiningError, PoolEntry, Rejection, DEFAULT_BLOCK_BUDGET, DEFAULT_EXPIRY_BLOCKS,
};
pub use digest::{sha256, sha256_concat, Digest};
pub use keys::{
    keygen, sign, KeyError, KeyPair, KeyRegistry, PubKey, SecretKey, Signature, SignatureVerifier,
};
pub use policy::{classify, NonStandardReason, PolicyEra, Standardness, StandardnessPolicy};
pub use script::{p2sh_lock, LockScript, ScriptError, MAX_MULTISIG_KEYS};
pub use tx::{Amount, OutPoint, Transaction, TxIn, TxOut, Witness, COIN};
pub use validate::{satisfy, validate_tx, Coin, TxError, UtxoSet};

/// Seeded generator used for every random draw in a simulation.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn sim_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests;
