//! Lock-script templates.
//!
//! There is no stack machine: every output is locked by one of a closed set
//! of templates, and a spend is checked structurally against its template.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::{DecodeError, Decoder, Encoder};
use super::{sha256, Digest, PubKey};

/// Hard cap on keys in one multisig, standard or not.
pub const MAX_MULTISIG_KEYS: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("multisig needs 1 <= m <= keys, got m={required} with {keys} keys")]
    BadThreshold { required: usize, keys: usize },
    #[error("multisig has {0} keys, the limit is 15")]
    TooManyKeys(usize),
    #[error("a data carrier cannot be wrapped as a redeem script")]
    UnspendableRedeem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LockScript {
    PayToKey {
        key: PubKey,
    },
    MultiSig {
        required: u8,
        keys: Vec<PubKey>,
    },
    ScriptHash {
        hash: Digest,
    },
    DataCarrier {
        #[serde(with = "hex_bytes")]
        payload: Vec<u8>,
    },
    TimeLocked {
        unlock_height: u64,
        inner: Box<LockScript>,
    },
    /// `<k1> <k2> m CHECKMULTISIGVERIFY <hash> OP_TRUE`: an m-of-n multisig
    /// whose spender must also reveal the preimage of `commitment`.
    HashGatedMultiSig {
        required: u8,
        keys: Vec<PubKey>,
        commitment: Digest,
    },
    /// Satisfied by a witness satisfying either branch.
    Either {
        left: Box<LockScript>,
        right: Box<LockScript>,
    },
}

impl LockScript {
    pub fn pay_to_key(key: PubKey) -> Self {
        LockScript::PayToKey { key }
    }

    pub fn multisig(required: usize, keys: Vec<PubKey>) -> Result<Self, ScriptError> {
        check_multisig(required, keys.len())?;
        Ok(LockScript::MultiSig {
            required: required as u8,
            keys,
        })
    }

    pub fn hash_gated_multisig(
        required: usize,
        keys: Vec<PubKey>,
        commitment: Digest,
    ) -> Result<Self, ScriptError> {
        check_multisig(required, keys.len())?;
        Ok(LockScript::HashGatedMultiSig {
            required: required as u8,
            keys,
            commitment,
        })
    }

    pub fn data_carrier(payload: Vec<u8>) -> Self {
        LockScript::DataCarrier { payload }
    }

    pub fn time_locked(inner: LockScript, unlock_height: u64) -> Self {
        LockScript::TimeLocked {
            unlock_height,
            inner: Box::new(inner),
        }
    }

    pub fn either(left: LockScript, right: LockScript) -> Self {
        LockScript::Either {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn is_unspendable(&self) -> bool {
        matches!(self, LockScript::DataCarrier { .. })
    }

    /// Checks the structural invariants of this template and any nested ones.
    pub fn check_structure(&self) -> Result<(), ScriptError> {
        match self {
            LockScript::MultiSig { required, keys }
            | LockScript::HashGatedMultiSig { required, keys, .. } => {
                check_multisig(*required as usize, keys.len())
            }
            LockScript::TimeLocked { inner, .. } => inner.check_structure(),
            LockScript::Either { left, right } => {
                left.check_structure()?;
                right.check_structure()
            }
            _ => Ok(()),
        }
    }

    pub fn encode(&self, e: &mut Encoder) {
        match self {
            LockScript::PayToKey { key } => {
                e.u8(0x01).digest(&key.0);
            }
            LockScript::MultiSig { required, keys } => {
                e.u8(0x02).u8(*required).u32(keys.len() as u32);
                for k in keys {
                    e.digest(&k.0);
                }
            }
            LockScript::ScriptHash { hash } => {
                e.u8(0x03).digest(hash);
            }
            LockScript::DataCarrier { payload } => {
                e.u8(0x04).bytes(payload);
            }
            LockScript::TimeLocked {
                unlock_height,
                inner,
            } => {
                e.u8(0x05).u64(*unlock_height);
                inner.encode(e);
            }
            LockScript::HashGatedMultiSig {
                required,
                keys,
                commitment,
            } => {
                e.u8(0x06).u8(*required).u32(keys.len() as u32);
                for k in keys {
                    e.digest(&k.0);
                }
                e.digest(commitment);
            }
            LockScript::Either { left, right } => {
                e.u8(0x07);
                left.encode(e);
                right.encode(e);
            }
        }
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        fn keys(d: &mut Decoder<'_>) -> Result<(u8, Vec<PubKey>), DecodeError> {
            let required = d.u8()?;
            let n = d.u32()? as usize;
            if n > d.remaining() / 32 {
                return Err(DecodeError::Truncated(0));
            }
            let keys = (0..n)
                .map(|_| d.digest().map(PubKey))
                .collect::<Result<_, _>>()?;
            Ok((required, keys))
        }
        Ok(match d.u8()? {
            0x01 => LockScript::PayToKey {
                key: PubKey(d.digest()?),
            },
            0x02 => {
                let (required, keys) = keys(d)?;
                LockScript::MultiSig { required, keys }
            }
            0x03 => LockScript::ScriptHash { hash: d.digest()? },
            0x04 => LockScript::DataCarrier {
                payload: d.bytes()?,
            },
            0x05 => {
                let unlock_height = d.u64()?;
                LockScript::TimeLocked {
                    unlock_height,
                    inner: Box::new(LockScript::decode(d)?),
                }
            }
            0x06 => {
                let (required, keys) = keys(d)?;
                LockScript::HashGatedMultiSig {
                    required,
                    keys,
                    commitment: d.digest()?,
                }
            }
            0x07 => {
                let left = Box::new(LockScript::decode(d)?);
                let right = Box::new(LockScript::decode(d)?);
                LockScript::Either { left, right }
            }
            tag => {
                return Err(DecodeError::BadTag {
                    what: "lock script",
                    tag,
                })
            }
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    /// Digest committed to by a pay-to-script-hash output wrapping this script.
    pub fn script_hash(&self) -> Digest {
        sha256(&self.to_bytes())
    }
}

fn check_multisig(required: usize, keys: usize) -> Result<(), ScriptError> {
    if keys > MAX_MULTISIG_KEYS {
        return Err(ScriptError::TooManyKeys(keys));
    }
    if required == 0 || required > keys {
        return Err(ScriptError::BadThreshold { required, keys });
    }
    Ok(())
}

/// Wraps a redeem script into a pay-to-script-hash lock.
pub fn p2sh_lock(redeem: &LockScript) -> Result<LockScript, ScriptError> {
    if redeem.is_unspendable() {
        return Err(ScriptError::UnspendableRedeem);
    }
    redeem.check_structure()?;
    Ok(LockScript::ScriptHash {
        hash: redeem.script_hash(),
    })
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
