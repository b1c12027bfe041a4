//! Deterministic simulator of the early Bitcoin oracle protocols.
//!
//! [`simchain`] is the host UTXO ledger. The protocol modules build on it:
//! [`will_oracle`], [`realitykeys`], [`orisi`], [`counterparty`] and
//! [`oraclize`] all settle through host transactions, while [`truthcoin`]
//! runs as a standalone side ledger. [`datafeed`] supplies fixture-backed
//! data sources, and [`harness`] drives scenario files end to end.

pub mod counterparty;
pub mod datafeed;
pub mod harness;
pub mod oraclize;
pub mod orisi;
pub mod realitykeys;
pub mod simchain;
pub mod truthcoin;
pub mod will_oracle;
