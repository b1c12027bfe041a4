//! Relay standardness. Classification never changes validity; it only
//! decides which miners are willing to include a transaction.

use serde::{Deserialize, Serialize};

use super::{LockScript, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyEra {
    /// Mid-2013 testing releases: 80-byte data carriers.
    Test2013,
    /// The v0.9.0 release: 40-byte data carriers.
    V090,
}

impl std::str::FromStr for PolicyEra {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "test2013" => Ok(PolicyEra::Test2013),
            "v090" => Ok(PolicyEra::V090),
            other => Err(format!(
                "unknown policy era {other:?} (expected test2013 or v090)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardnessPolicy {
    pub era: PolicyEra,
    pub max_data_payload: usize,
    pub max_standard_multisig_keys: usize,
}

impl StandardnessPolicy {
    pub fn for_era(era: PolicyEra) -> Self {
        let max_data_payload = match era {
            PolicyEra::Test2013 => 80,
            PolicyEra::V090 => 40,
        };
        StandardnessPolicy {
            era,
            max_data_payload,
            max_standard_multisig_keys: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NonStandardReason {
    DataPayloadTooLarge {
        len: usize,
        max: usize,
    },
    MultisigTooManyKeys {
        keys: usize,
        max: usize,
    },
    NonTemplateOutput {
        output: usize,
    },
    /// An input whose witness shows it spends a non-standard script.
    NonStandardSpend {
        input: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Standardness {
    Standard,
    NonStandard(NonStandardReason),
}

impl Standardness {
    pub fn is_standard(&self) -> bool {
        matches!(self, Standardness::Standard)
    }
}

fn classify_output(
    index: usize,
    lock: &LockScript,
    policy: &StandardnessPolicy,
) -> Option<NonStandardReason> {
    match lock {
        LockScript::PayToKey { .. } | LockScript::ScriptHash { .. } => None,
        LockScript::DataCarrier { payload } if payload.len() > policy.max_data_payload => {
            Some(NonStandardReason::DataPayloadTooLarge {
                len: payload.len(),
                max: policy.max_data_payload,
            })
        }
        LockScript::DataCarrier { .. } => None,
        LockScript::MultiSig { keys, .. } if keys.len() > policy.max_standard_multisig_keys => {
            Some(NonStandardReason::MultisigTooManyKeys {
                keys: keys.len(),
                max: policy.max_standard_multisig_keys,
            })
        }
        LockScript::MultiSig { .. } => None,
        LockScript::TimeLocked { inner, .. } => classify_output(index, inner, policy),
        LockScript::HashGatedMultiSig { .. } | LockScript::Either { .. } => {
            Some(NonStandardReason::NonTemplateOutput { output: index })
        }
    }
}

fn redeem_is_standard(lock: &LockScript, policy: &StandardnessPolicy) -> bool {
    match lock {
        LockScript::MultiSig { keys, .. } | LockScript::HashGatedMultiSig { keys, .. } => {
            keys.len() <= policy.max_standard_multisig_keys
        }
        LockScript::TimeLocked { inner, .. } => redeem_is_standard(inner, policy),
        LockScript::Either { left, right } => {
            redeem_is_standard(left, policy) && redeem_is_standard(right, policy)
        }
        LockScript::PayToKey { .. } => true,
        LockScript::ScriptHash { .. } | LockScript::DataCarrier { .. } => false,
    }
}

/// Pure function of the transaction and the policy.
pub fn classify(tx: &Transaction, policy: &StandardnessPolicy) -> Standardness {
    for (i, out) in tx.outputs.iter().enumerate() {
        if let Some(reason) = classify_output(i, &out.lock, policy) {
            return Standardness::NonStandard(reason);
        }
    }
    for (i, input) in tx.inputs.iter().enumerate() {
        let w = &input.witness;
        let bad_redeem = w
            .redeem
            .as_ref()
            .is_some_and(|r| !redeem_is_standard(r, policy));
        // A bare hash-gated spend, or more signatures than any standard
        // multisig could ask for, means the spent output was non-standard.
        let bare_gate = w.redeem.is_none() && w.expr_preimage.is_some();
        let too_many_sigs = w.signatures.len() > policy.max_standard_multisig_keys;
        if bad_redeem || bare_gate || too_many_sigs {
            return Standardness::NonStandard(NonStandardReason::NonStandardSpend { input: i });
        }
    }
    Standardness::Standard
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simchain::{keygen, sha256, OutPoint, TxOut};

    fn carrier_tx(len: usize) -> Transaction {
        Transaction::spending(
            &[OutPoint::new(sha256(b"p"), 0)],
            vec![TxOut::new(0, LockScript::data_carrier(vec![0xab; len]))],
            0,
        )
    }

    #[test]
    fn era_payload_limits() {
        assert_eq!(
            StandardnessPolicy::for_era(PolicyEra::V090).max_data_payload,
            40
        );
        assert_eq!(
            StandardnessPolicy::for_era(PolicyEra::Test2013).max_data_payload,
            80
        );
    }

    #[test]
    fn forty_bytes_standard_under_both() {
        for era in [PolicyEra::Test2013, PolicyEra::V090] {
            assert!(classify(&carrier_tx(40), &StandardnessPolicy::for_era(era)).is_standard());
        }
    }

    #[test]
    fn eighty_bytes_depends_on_era() {
        let tx = carrier_tx(80);
        assert!(classify(&tx, &StandardnessPolicy::for_era(PolicyEra::Test2013)).is_standard());
        assert_eq!(
            classify(&tx, &StandardnessPolicy::for_era(PolicyEra::V090)),
            Standardness::NonStandard(NonStandardReason::DataPayloadTooLarge { len: 80, max: 40 })
        );
        assert!(!classify(
            &carrier_tx(81),
            &StandardnessPolicy::for_era(PolicyEra::Test2013)
        )
        .is_standard());
    }

    #[test]
    fn large_multisig_non_standard() {
        let keys: Vec<_> = (0..11)
            .map(|i| keygen(format!("k{i}").as_bytes()).unwrap().public)
            .collect();
        let tx = Transaction::spending(
            &[OutPoint::new(sha256(b"p"), 0)],
            vec![TxOut::new(1, LockScript::multisig(8, keys).unwrap())],
            0,
        );
        let p = StandardnessPolicy::for_era(PolicyEra::V090);
        assert_eq!(
            classify(&tx, &p),
            Standardness::NonStandard(NonStandardReason::MultisigTooManyKeys { keys: 11, max: 3 })
        );
    }

    #[test]
    fn era_parse() {
        assert_eq!("v090".parse::<PolicyEra>().unwrap(), PolicyEra::V090);
        assert_eq!(
            "Test2013".parse::<PolicyEra>().unwrap(),
            PolicyEra::Test2013
        );
        assert!("v010".parse::<PolicyEra>().is_err());
    }
}
