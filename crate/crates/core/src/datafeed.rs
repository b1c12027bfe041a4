//! Fixture-backed data sources and authenticity proofs.
//!
//! A source is a set of time series keyed by string. Queries return the
//! latest entry at or before the requested time. Proofs bind a query to a
//! digest of the response and the identity of the attestor that vouched for
//! it; they are an honest-attestor digest chain, not a TLS transcript.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simchain::codec::Encoder;
use crate::simchain::{sha256, sha256_concat, Digest, KeyPair, Signature, SignatureVerifier};

pub type EpochSeconds = i64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedError {
    #[error("no entry for {key:?} at or before {time}")]
    NoData { key: String, time: EpochSeconds },
    #[error("unknown data source {0:?}")]
    UnknownSource(String),
    #[error("fixture parse error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl Value {
    /// Canonical bytes: a type tag followed by the fixed-width or
    /// length-prefixed body.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            Value::Bool(b) => e.u8(0x01).u8(*b as u8),
            Value::Number(n) => e.u8(0x02).f64(*n),
            Value::Text(s) => e.u8(0x03).str(s),
        };
        e.finish()
    }

    pub fn digest(&self) -> Digest {
        sha256(&self.to_bytes())
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Number(n) => write!(f, "{n}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    /// The value is boolean `true`; the threshold is ignored.
    #[serde(rename = "event_true")]
    EventTrue,
}

impl Comparator {
    /// Evaluates `value <op> threshold`. Type mismatches evaluate false.
    pub fn eval(&self, value: &Value, threshold: f64) -> bool {
        match (self, value) {
            (Comparator::EventTrue, Value::Bool(b)) => *b,
            (Comparator::EventTrue, _) => false,
            (op, Value::Number(v)) => op.eval_number(*v, threshold),
            _ => false,
        }
    }

    pub fn eval_number(&self, v: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => v < threshold,
            Comparator::Le => v <= threshold,
            Comparator::Eq => v == threshold,
            Comparator::Ge => v >= threshold,
            Comparator::Gt => v > threshold,
            Comparator::EventTrue => false,
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            Comparator::Lt => 0,
            Comparator::Le => 1,
            Comparator::Eq => 2,
            Comparator::Ge => 3,
            Comparator::Gt => 4,
            Comparator::EventTrue => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Comparator::Lt,
            1 => Comparator::Le,
            2 => Comparator::Eq,
            3 => Comparator::Ge,
            4 => Comparator::Gt,
            5 => Comparator::EventTrue,
            _ => return None,
        })
    }
}

/// One row of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub key: String,
    pub time: EpochSeconds,
    pub value: Value,
}

#[derive(Debug, Clone)]
pub struct DataSource {
    pub id: String,
    pub ssl: bool,
    signer: Option<KeyPair>,
    series: BTreeMap<String, BTreeMap<EpochSeconds, Value>>,
}

impl DataSource {
    pub fn new(id: impl Into<String>, ssl: bool) -> Self {
        DataSource {
            id: id.into(),
            ssl,
            signer: None,
            series: BTreeMap::new(),
        }
    }

    /// Makes the source sign every observation it serves.
    pub fn with_signer(mut self, key: KeyPair) -> Self {
        self.signer = Some(key);
        self
    }

    pub fn signs_data(&self) -> bool {
        self.signer.is_some()
    }

    pub fn signer_key(&self) -> Option<&KeyPair> {
        self.signer.as_ref()
    }

    pub fn insert(&mut self, key: impl Into<String>, time: EpochSeconds, value: Value) {
        self.series
            .entry(key.into())
            .or_default()
            .insert(time, value);
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = FixtureEntry>) {
        for e in entries {
            self.insert(e.key, e.time, e.value);
        }
    }

    /// Parses a fixture file: a JSON array of `{key, time, value}`.
    pub fn load_fixture_json(&mut self, json: &str) -> Result<(), FeedError> {
        let entries: Vec<FixtureEntry> =
            serde_json::from_str(json).map_err(|e| FeedError::Fixture(e.to_string()))?;
        self.extend(entries);
        Ok(())
    }

    pub fn query(&self, key: &str, time: EpochSeconds) -> Result<Observation, FeedError> {
        let (_, value) = self
            .series
            .get(key)
            .and_then(|s| s.range(..=time).next_back())
            .ok_or_else(|| FeedError::NoData {
                key: key.to_string(),
                time,
            })?;
        let digest = observation_digest(key, time, value);
        Ok(Observation {
            source_id: self.id.clone(),
            key: key.to_string(),
            time,
            value: value.clone(),
            source_signature: self.signer.as_ref().map(|k| k.sign(&digest)),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.series.keys()
    }
}

/// `H(key || time || value)`, the digest a signing source signs.
pub fn observation_digest(key: &str, time: EpochSeconds, value: &Value) -> Digest {
    let mut e = Encoder::new();
    e.str(key).i64(time).raw(&value.to_bytes());
    sha256(&e.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub source_id: String,
    pub key: String,
    pub time: EpochSeconds,
    pub value: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_signature: Option<Signature>,
}

impl Observation {
    /// Checks the source signature, when the source signs its data.
    pub fn verify_source_signature(&self, verifier: &dyn SignatureVerifier) -> bool {
        match &self.source_signature {
            None => true,
            Some(sig) => {
                let d = observation_digest(&self.key, self.time, &self.value);
                verifier.verify(sig, &sig.signer, &d).unwrap_or(false)
            }
        }
    }
}

/// All sources of a simulation, by id.
#[derive(Debug, Clone, Default)]
pub struct FeedSet {
    sources: BTreeMap<String, DataSource>,
}

impl FeedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, source: DataSource) {
        self.sources.insert(source.id.clone(), source);
    }

    pub fn get(&self, id: &str) -> Result<&DataSource, FeedError> {
        self.sources
            .get(id)
            .ok_or_else(|| FeedError::UnknownSource(id.to_string()))
    }

    pub fn get_mut(&mut self, id: &str) -> Result<&mut DataSource, FeedError> {
        self.sources
            .get_mut(id)
            .ok_or_else(|| FeedError::UnknownSource(id.to_string()))
    }

    pub fn query(&self, id: &str, key: &str, time: EpochSeconds) -> Result<Observation, FeedError> {
        self.get(id)?.query(key, time)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataSource> {
        self.sources.values()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthenticityProof {
    pub query_key: String,
    pub query_time: EpochSeconds,
    pub response_digest: Digest,
    pub source_id: String,
    pub attestor_id: String,
    pub attestation: Digest,
}

/// `H(query || response_digest || source_id || attestor_id)`.
pub fn attestation_digest(
    key: &str,
    time: EpochSeconds,
    response_digest: &Digest,
    source_id: &str,
    attestor_id: &str,
) -> Digest {
    let mut e = Encoder::new();
    e.str(key).i64(time);
    sha256_concat(&[
        &e.finish(),
        response_digest.as_bytes(),
        &(source_id.len() as u32).to_le_bytes(),
        source_id.as_bytes(),
        &(attestor_id.len() as u32).to_le_bytes(),
        attestor_id.as_bytes(),
    ])
}

impl AuthenticityProof {
    pub fn for_observation(obs: &Observation, attestor_id: &str) -> Self {
        let response_digest = obs.value.digest();
        AuthenticityProof {
            attestation: attestation_digest(
                &obs.key,
                obs.time,
                &response_digest,
                &obs.source_id,
                attestor_id,
            ),
            query_key: obs.key.clone(),
            query_time: obs.time,
            response_digest,
            source_id: obs.source_id.clone(),
            attestor_id: attestor_id.to_string(),
        }
    }
}

/// Queries the source and produces a proof over the observation.
pub fn make_proof(
    source: &DataSource,
    key: &str,
    time: EpochSeconds,
    attestor_id: &str,
) -> Result<(Observation, AuthenticityProof), FeedError> {
    let obs = source.query(key, time)?;
    let proof = AuthenticityProof::for_observation(&obs, attestor_id);
    Ok((obs, proof))
}

/// True iff the proof covers exactly this observation and was issued by
/// `attestor_id`.
pub fn verify_proof(proof: &AuthenticityProof, obs: &Observation, attestor_id: &str) -> bool {
    proof.query_key == obs.key
        && proof.query_time == obs.time
        && proof.source_id == obs.source_id
        && proof.attestor_id == attestor_id
        && proof.response_digest == obs.value.digest()
        && proof.attestation
            == attestation_digest(
                &proof.query_key,
                proof.query_time,
                &proof.response_digest,
                &proof.source_id,
                attestor_id,
            )
}

/// The party that fetches data and vouches for it.
pub trait Attestor {
    fn id(&self) -> &str;
    fn attest(&self, obs: &Observation) -> AuthenticityProof;
}

#[derive(Debug, Clone)]
pub struct HonestAttestor {
    pub id: String,
}

impl HonestAttestor {
    pub fn new(id: impl Into<String>) -> Self {
        HonestAttestor { id: id.into() }
    }
}

impl Attestor for HonestAttestor {
    fn id(&self) -> &str {
        &self.id
    }

    fn attest(&self, obs: &Observation) -> AuthenticityProof {
        AuthenticityProof::for_observation(obs, &self.id)
    }
}

/// Attests to a value other than the one served, as a compromised fetcher
/// would.
#[derive(Debug, Clone)]
pub struct TamperingAttestor {
    pub id: String,
    pub substitute: Value,
}

impl Attestor for TamperingAttestor {
    fn id(&self) -> &str {
        &self.id
    }

    fn attest(&self, obs: &Observation) -> AuthenticityProof {
        let mut forged = obs.clone();
        forged.value = self.substitute.clone();
        AuthenticityProof::for_observation(&forged, &self.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simchain::{keygen, KeyRegistry};

    const T0: EpochSeconds = 1_400_000_000;

    fn milan() -> DataSource {
        let mut s = DataSource::new("wolfram", true);
        s.insert("milan_temp", T0, Value::Number(12.0));
        s
    }

    #[test]
    fn direct_lookup() {
        assert_eq!(
            milan().query("milan_temp", T0).unwrap().value,
            Value::Number(12.0)
        );
    }

    #[test]
    fn carry_forward() {
        let obs = milan().query("milan_temp", T0 + 3600).unwrap();
        assert_eq!(obs.value, Value::Number(12.0));
        assert_eq!(obs.time, T0 + 3600);
    }

    #[test]
    fn before_first_entry_is_no_data() {
        assert!(matches!(
            milan().query("milan_temp", T0 - 1),
            Err(FeedError::NoData { .. })
        ));
        assert!(matches!(
            milan().query("rome_temp", T0),
            Err(FeedError::NoData { .. })
        ));
    }

    #[test]
    fn latest_entry_wins() {
        let mut s = milan();
        s.insert("milan_temp", T0 + 100, Value::Number(8.0));
        assert_eq!(
            s.query("milan_temp", T0 + 99).unwrap().value,
            Value::Number(12.0)
        );
        assert_eq!(
            s.query("milan_temp", T0 + 100).unwrap().value,
            Value::Number(8.0)
        );
    }

    #[test]
    fn fixture_json_all_value_types() {
        let mut s = DataSource::new("f", true);
        s.load_fixture_json(
            r#"[{"key":"rain","time":10,"value":true},
                {"key":"temp","time":10,"value":12.5},
                {"key":"winner","time":10,"value":"candidate A"}]"#,
        )
        .unwrap();
        assert_eq!(s.query("rain", 10).unwrap().value, Value::Bool(true));
        assert_eq!(s.query("temp", 11).unwrap().value, Value::Number(12.5));
        assert_eq!(
            s.query("winner", 10).unwrap().value,
            Value::Text("candidate A".into())
        );
        assert!(matches!(
            s.load_fixture_json("{"),
            Err(FeedError::Fixture(_))
        ));
    }

    #[test]
    fn proof_over_genuine_observation() {
        let (obs, proof) = make_proof(&milan(), "milan_temp", T0, "oraclize").unwrap();
        assert!(verify_proof(&proof, &obs, "oraclize"));
    }

    #[test]
    fn tampered_value_fails() {
        let (mut obs, proof) = make_proof(&milan(), "milan_temp", T0, "oraclize").unwrap();
        obs.value = Value::Number(9.0);
        assert!(!verify_proof(&proof, &obs, "oraclize"));
    }

    #[test]
    fn attestor_mismatch_fails() {
        let (obs, proof) = make_proof(&milan(), "milan_temp", T0, "oraclize").unwrap();
        // Recompute with the wrong attestor id: the attestation differs.
        let wrong = attestation_digest(
            &obs.key,
            obs.time,
            &obs.value.digest(),
            &obs.source_id,
            "mallory",
        );
        assert_ne!(wrong, proof.attestation);
        assert!(!verify_proof(&proof, &obs, "mallory"));
        let mut relabeled = proof.clone();
        relabeled.attestor_id = "mallory".into();
        assert!(!verify_proof(&relabeled, &obs, "mallory"));
    }

    #[test]
    fn each_field_alteration_fails() {
        let (obs, proof) = make_proof(&milan(), "milan_temp", T0, "a").unwrap();
        let mut p = proof.clone();
        p.query_time += 1;
        assert!(!verify_proof(&p, &obs, "a"));
        let mut p = proof.clone();
        p.source_id = "other".into();
        assert!(!verify_proof(&p, &obs, "a"));
        let mut p = proof.clone();
        p.attestation.0[0] ^= 1;
        assert!(!verify_proof(&p, &obs, "a"));
        let mut p = proof;
        p.response_digest = Value::Number(13.0).digest();
        assert!(!verify_proof(&p, &obs, "a"));
    }

    #[test]
    fn tampering_attestor_detected() {
        let obs = milan().query("milan_temp", T0).unwrap();
        let bad = TamperingAttestor {
            id: "oraclize".into(),
            substitute: Value::Number(3.0),
        };
        assert!(!verify_proof(&bad.attest(&obs), &obs, "oraclize"));
    }

    #[test]
    fn signing_source() {
        let key = keygen(b"freebase").unwrap();
        let mut reg = KeyRegistry::new();
        reg.register(&key);
        let s = milan().with_signer(key);
        let mut obs = s.query("milan_temp", T0).unwrap();
        assert!(obs.verify_source_signature(&reg));
        obs.value = Value::Number(1.0);
        assert!(!obs.verify_source_signature(&reg));
    }

    #[test]
    fn comparators() {
        let v = Value::Number(400.0);
        assert!(Comparator::Ge.eval(&v, 400.0));
        assert!(!Comparator::Gt.eval(&v, 400.0));
        assert!(Comparator::Eq.eval(&v, 400.0));
        assert!(!Comparator::Ge.eval(&Value::Number(399.99), 400.0));
        assert!(Comparator::EventTrue.eval(&Value::Bool(true), 0.0));
        assert!(!Comparator::EventTrue.eval(&Value::Number(1.0), 0.0));
        assert!(!Comparator::Gt.eval(&Value::Bool(true), 0.0));
        for t in 0..6 {
            assert_eq!(Comparator::from_tag(t).unwrap().tag(), t);
        }
    }
}
