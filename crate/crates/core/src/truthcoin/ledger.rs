use std::collections::BTreeMap;

use serde::Serialize;

use super::{Address, TruthcoinError};

#[derive(Debug, Clone, Default, Serialize)]
pub struct SideLedger {
    csh: BTreeMap<Address, u64>,
    vtc: BTreeMap<Address, u64>,
    frozen_vtc: BTreeMap<Address, u64>,
    minted_csh: u64,
    burned_csh: u64,
}

impl SideLedger {
    pub(super) fn allocate_vtc(&mut self, addr: &str, units: u64) {
        *self.vtc.entry(addr.to_string()).or_default() += units;
    }

    pub fn csh(&self, addr: &str) -> u64 {
        self.csh.get(addr).copied().unwrap_or(0)
    }

    pub fn vtc(&self, addr: &str) -> u64 {
        self.vtc.get(addr).copied().unwrap_or(0)
    }

    pub fn frozen_vtc(&self, addr: &str) -> u64 {
        self.frozen_vtc.get(addr).copied().unwrap_or(0)
    }

    /// Free plus frozen VTC over all holders.
    pub fn total_vtc(&self) -> u64 {
        self.vtc.values().sum::<u64>() + self.frozen_vtc.values().sum::<u64>()
    }

    pub fn total_csh(&self) -> u64 {
        self.csh.values().sum()
    }

    pub fn minted_csh(&self) -> u64 {
        self.minted_csh
    }

    pub fn burned_csh(&self) -> u64 {
        self.burned_csh
    }

    pub fn vtc_holders(&self) -> impl Iterator<Item = (&Address, u64)> {
        let mut all: BTreeMap<&Address, u64> = BTreeMap::new();
        for (a, v) in self.vtc.iter().chain(self.frozen_vtc.iter()) {
            *all.entry(a).or_default() += v;
        }
        all.into_iter()
    }

    /// Peg-in: CSH backed 1:1 by BTC locked on the host chain.
    pub fn peg_in(&mut self, addr: &str, units: u64) {
        *self.csh.entry(addr.to_string()).or_default() += units;
        self.minted_csh += units;
    }

    pub fn peg_out(&mut self, addr: &str, units: u64) -> Result<(), TruthcoinError> {
        self.debit_csh(addr, units)?;
        self.burned_csh += units;
        Ok(())
    }

    pub(super) fn debit_csh(&mut self, addr: &str, units: u64) -> Result<(), TruthcoinError> {
        let have = self.csh(addr);
        if have < units {
            return Err(TruthcoinError::InsufficientCSH { need: units, have });
        }
        self.csh.insert(addr.to_string(), have - units);
        Ok(())
    }

    pub(super) fn credit_csh(&mut self, addr: &str, units: u64) {
        *self.csh.entry(addr.to_string()).or_default() += units;
    }

    pub(super) fn freeze(&mut self, addr: &str, units: u64) -> Result<(), TruthcoinError> {
        let have = self.vtc(addr);
        if have < units {
            return Err(TruthcoinError::InsufficientVTC { need: units, have });
        }
        self.vtc.insert(addr.to_string(), have - units);
        *self.frozen_vtc.entry(addr.to_string()).or_default() += units;
        Ok(())
    }

    pub(super) fn unfreeze(&mut self, addr: &str, units: u64) {
        let f = self.frozen_vtc.entry(addr.to_string()).or_default();
        assert!(*f >= units, "unfreezing more than frozen");
        *f -= units;
        *self.vtc.entry(addr.to_string()).or_default() += units;
    }

    /// Applies a signed adjustment to frozen VTC. Callers keep the sum of
    /// all adjustments at zero.
    pub(super) fn adjust_frozen(&mut self, addr: &str, delta: i64) {
        let f = self.frozen_vtc.entry(addr.to_string()).or_default();
        let next = *f as i128 + delta as i128;
        assert!(next >= 0, "frozen VTC would go negative");
        *f = next as u64;
    }
}

impl SideLedger {
    /// Signed adjustment to free VTC, used for slashing holders who did not
    /// vote and for undoing it.
    pub(super) fn adjust_free(&mut self, addr: &str, delta: i64) {
        let f = self.vtc.entry(addr.to_string()).or_default();
        let next = *f as i128 + delta as i128;
        assert!(next >= 0, "VTC would go negative");
        *f = next as u64;
    }
}
