use std::fmt;

use serde::{Deserialize, Serialize};

use super::codec::{DecodeError, Decoder, Encoder};
use super::script::hex_bytes;
use super::{sha256, sha256_concat, Digest, LockScript, PubKey, Signature};

pub type Amount = u64;

/// Satoshis per coin.
pub const COIN: Amount = 100_000_000;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutPoint {
    pub txid: Digest,
    pub index: u32,
}

impl OutPoint {
    pub fn new(txid: Digest, index: u32) -> Self {
        OutPoint { txid, index }
    }
}

impl fmt::Debug for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", &self.txid.to_hex()[..12], self.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default)]
    pub signatures: Vec<Signature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redeem: Option<LockScript>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "opt_hex_bytes"
    )]
    pub expr_preimage: Option<Vec<u8>>,
}

impl Witness {
    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty() && self.redeem.is_none() && self.expr_preimage.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxIn {
    pub outpoint: OutPoint,
    #[serde(default)]
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOut {
    pub value: Amount,
    pub lock: LockScript,
}

impl TxOut {
    pub fn new(value: Amount, lock: LockScript) -> Self {
        TxOut { value, lock }
    }

    pub fn to_key(value: Amount, key: PubKey) -> Self {
        TxOut::new(value, LockScript::pay_to_key(key))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    /// Earliest block height at which the transaction may be mined; 0 = none.
    #[serde(default)]
    pub locktime: u64,
}

impl Transaction {
    pub fn spending(outpoints: &[OutPoint], outputs: Vec<TxOut>, locktime: u64) -> Self {
        Transaction {
            inputs: outpoints
                .iter()
                .map(|op| TxIn {
                    outpoint: *op,
                    witness: Witness::default(),
                })
                .collect(),
            outputs,
            locktime,
        }
    }

    fn encode_with(&self, e: &mut Encoder, with_witness: bool) {
        e.u32(self.inputs.len() as u32);
        for input in &self.inputs {
            e.digest(&input.outpoint.txid).u32(input.outpoint.index);
            if with_witness {
                encode_witness(e, &input.witness);
            } else {
                encode_witness(e, &Witness::default());
            }
        }
        e.u32(self.outputs.len() as u32);
        for out in &self.outputs {
            e.u64(out.value);
            out.lock.encode(e);
        }
        e.u64(self.locktime);
    }

    pub fn encode(&self, e: &mut Encoder) {
        self.encode_with(e, true);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n_in = d.u32()? as usize;
        let mut inputs = Vec::with_capacity(n_in.min(1024));
        for _ in 0..n_in {
            let txid = d.digest()?;
            let index = d.u32()?;
            let witness = decode_witness(d)?;
            inputs.push(TxIn {
                outpoint: OutPoint { txid, index },
                witness,
            });
        }
        let n_out = d.u32()? as usize;
        let mut outputs = Vec::with_capacity(n_out.min(1024));
        for _ in 0..n_out {
            let value = d.u64()?;
            let lock = LockScript::decode(d)?;
            outputs.push(TxOut { value, lock });
        }
        let locktime = d.u64()?;
        Ok(Transaction {
            inputs,
            outputs,
            locktime,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let tx = Transaction::decode(&mut d)?;
        d.finish()?;
        Ok(tx)
    }

    pub fn txid(&self) -> Digest {
        sha256(&self.to_bytes())
    }

    /// The digest every witness signature commits to: the transaction with
    /// all witnesses blanked.
    pub fn sighash(&self) -> Digest {
        let mut e = Encoder::new();
        self.encode_with(&mut e, false);
        sha256_concat(&[b"oraclesim/sighash", &e.finish()])
    }

    pub fn size(&self) -> usize {
        self.to_bytes().len()
    }

    pub fn output_value(&self) -> Amount {
        self.outputs.iter().map(|o| o.value).sum()
    }

    pub fn outpoint(&self, index: u32) -> OutPoint {
        OutPoint::new(self.txid(), index)
    }
}

fn encode_witness(e: &mut Encoder, w: &Witness) {
    e.u32(w.signatures.len() as u32);
    for s in &w.signatures {
        e.digest(&s.signer.0).digest(&s.digest).digest(&s.tag);
    }
    match &w.redeem {
        Some(r) => {
            e.u8(1);
            r.encode(e);
        }
        None => {
            e.u8(0);
        }
    }
    match &w.expr_preimage {
        Some(p) => {
            e.u8(1).bytes(p);
        }
        None => {
            e.u8(0);
        }
    }
}

fn decode_witness(d: &mut Decoder<'_>) -> Result<Witness, DecodeError> {
    let n = d.u32()? as usize;
    if n > d.remaining() / 96 {
        return Err(DecodeError::Truncated(0));
    }
    let mut signatures = Vec::with_capacity(n);
    for _ in 0..n {
        signatures.push(Signature {
            signer: PubKey(d.digest()?),
            digest: d.digest()?,
            tag: d.digest()?,
        });
    }
    let redeem = match d.u8()? {
        0 => None,
        1 => Some(LockScript::decode(d)?),
        tag => {
            return Err(DecodeError::BadTag {
                what: "redeem flag",
                tag,
            })
        }
    };
    let expr_preimage = match d.u8()? {
        0 => None,
        1 => Some(d.bytes()?),
        tag => {
            return Err(DecodeError::BadTag {
                what: "preimage flag",
                tag,
            })
        }
    };
    Ok(Witness {
        signatures,
        redeem,
        expr_preimage,
    })
}

mod opt_hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => super::hex_bytes::serialize(b, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| hex::decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simchain::keygen;

    fn sample() -> Transaction {
        let a = keygen(b"a").unwrap();
        let mut tx = Transaction::spending(
            &[OutPoint::new(sha256(b"prev"), 3)],
            vec![
                TxOut::to_key(5000, a.public),
                TxOut::new(0, LockScript::data_carrier(b"hello".to_vec())),
            ],
            7,
        );
        let sig = a.sign(&tx.sighash());
        tx.inputs[0].witness.signatures.push(sig);
        tx.inputs[0].witness.expr_preimage = Some(b"expr".to_vec());
        tx
    }

    #[test]
    fn sighash_ignores_witness() {
        let tx = sample();
        let mut bare = tx.clone();
        bare.inputs[0].witness = Witness::default();
        assert_eq!(tx.sighash(), bare.sighash());
        assert_ne!(tx.txid(), bare.txid());
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert_eq!(
            Transaction::from_bytes(&bytes),
            Err(DecodeError::Trailing(1))
        );
    }

    #[test]
    fn truncated_rejected() {
        let bytes = sample().to_bytes();
        assert!(Transaction::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let tx = sample();
        let j = serde_json::to_string(&tx).unwrap();
        let back: Transaction = serde_json::from_str(&j).unwrap();
        assert_eq!(back, tx);
    }
}
