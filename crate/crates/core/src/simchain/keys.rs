//! Simulation-grade signatures.
//!
//! A public key is the digest of its secret, and a signature tag is
//! `H(secret || digest)`. Verification therefore needs the secret, which the
//! verifier looks up in a [`KeyRegistry`]. Anyone who learns a secret can
//! sign with it, which is exactly what key-release protocols rely on.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{sha256, sha256_concat, Digest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("seed material must be nonempty")]
    InvalidSeed,
    #[error("no secret registered for public key {0}")]
    UnknownKey(PubKey),
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PubKey(pub Digest);

impl fmt::Debug for PubKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PubKey({})", &self.0.to_hex()[..12])
    }
}

impl fmt::Display for PubKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecretKey(pub Digest);

impl SecretKey {
    pub fn public(&self) -> PubKey {
        PubKey(sha256(self.0.as_bytes()))
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PubKey,
}

impl KeyPair {
    pub fn from_secret(secret: SecretKey) -> Self {
        KeyPair {
            public: secret.public(),
            secret,
        }
    }

    pub fn sign(&self, digest: &Digest) -> Signature {
        sign(&self.secret, digest)
    }
}

/// Derives a key pair from seed material. The secret is `H(seed)`.
pub fn keygen(seed_material: &[u8]) -> Result<KeyPair, KeyError> {
    if seed_material.is_empty() {
        return Err(KeyError::InvalidSeed);
    }
    Ok(KeyPair::from_secret(SecretKey(sha256(seed_material))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer: PubKey,
    pub digest: Digest,
    pub tag: Digest,
}

pub fn sign(secret: &SecretKey, digest: &Digest) -> Signature {
    Signature {
        signer: secret.public(),
        digest: *digest,
        tag: signature_tag(secret, digest),
    }
}

fn signature_tag(secret: &SecretKey, digest: &Digest) -> Digest {
    sha256_concat(&[secret.0.as_bytes(), digest.as_bytes()])
}

/// Anything that can check a signature against a public key.
pub trait SignatureVerifier {
    fn verify(&self, sig: &Signature, public: &PubKey, digest: &Digest) -> Result<bool, KeyError>;
}

/// Verifier-side map from public key to secret.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    secrets: BTreeMap<PubKey, SecretKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, pair: &KeyPair) {
        self.secrets.insert(pair.public, pair.secret);
    }

    pub fn register_secret(&mut self, secret: &SecretKey) -> PubKey {
        let public = secret.public();
        self.secrets.insert(public, *secret);
        public
    }

    pub fn contains(&self, public: &PubKey) -> bool {
        self.secrets.contains_key(public)
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }
}

impl SignatureVerifier for KeyRegistry {
    fn verify(&self, sig: &Signature, public: &PubKey, digest: &Digest) -> Result<bool, KeyError> {
        let secret = self
            .secrets
            .get(public)
            .ok_or(KeyError::UnknownKey(*public))?;
        Ok(sig.signer == *public
            && sig.digest == *digest
            && sig.tag == signature_tag(secret, digest))
    }
}
