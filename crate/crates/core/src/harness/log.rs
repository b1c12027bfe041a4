use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::simchain::{sha256, Digest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub module: String,
    pub kind: String,
    pub payload: Value,
}

/// Append-only event record. One JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    records: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, e: Event) {
        self.records.push(e);
    }

    pub fn records(&self) -> &[Event] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(EventLog { records })
    }

    /// H(the JSONL bytes).
    pub fn digest(&self) -> Digest {
        sha256(self.to_jsonl().as_bytes())
    }
}

/// Whether two logs are byte-identical, judged by digest.
pub fn verify_replay(a: &EventLog, b: &EventLog) -> bool {
    a.digest() == b.digest()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV row per tick that has events: event count, host inclusions and
/// their delays, each account's balance after the tick's block, and each
/// holder's VTC after the latest ballot resolution.
pub fn export_metrics(log: &EventLog) -> String {
    let mut accounts: Vec<String> = vec![];
    let mut holders: Vec<String> = vec![];
    for e in log.records() {
        if let Some(b) = e.payload.get("balances").and_then(Value::as_object) {
            for k in b.keys() {
                if !accounts.contains(k) {
                    accounts.push(k.clone());
                }
            }
        }
        if let Some(v) = e.payload.get("vtc").and_then(Value::as_object) {
            for k in v.keys() {
                if !holders.contains(k) {
                    holders.push(k.clone());
                }
            }
        }
    }
    accounts.sort();
    holders.sort();

    let mut by_tick: BTreeMap<u64, Vec<&Event>> = BTreeMap::new();
    for e in log.records() {
        by_tick.entry(e.tick).or_default().push(e);
    }

    let mut out = String::from("tick,events,included,inclusion_delays,mean_delay");
    for a in &accounts {
        out.push_str(&format!(",balance_{}", csv_field(a)));
    }
    for h in &holders {
        out.push_str(&format!(",vtc_{}", csv_field(h)));
    }
    out.push('\n');

    let mut last_bal: BTreeMap<String, u64> = BTreeMap::new();
    let mut last_vtc: BTreeMap<String, u64> = BTreeMap::new();
    for (tick, events) in by_tick {
        let mut delays = vec![];
        for e in &events {
            if e.kind == "block" {
                if let Some(inc) = e.payload.get("included").and_then(Value::as_array) {
                    delays.extend(
                        inc.iter()
                            .filter_map(|i| i.get("delay").and_then(Value::as_u64)),
                    );
                }
            }
            if let Some(b) = e.payload.get("balances").and_then(Value::as_object) {
                for (k, v) in b {
                    last_bal.insert(k.clone(), v.as_u64().unwrap_or(0));
                }
            }
            if let Some(b) = e.payload.get("vtc").and_then(Value::as_object) {
                for (k, v) in b {
                    last_vtc.insert(k.clone(), v.as_u64().unwrap_or(0));
                }
            }
        }
        let mean = if delays.is_empty() {
            String::new()
        } else {
            format!(
                "{:.3}",
                delays.iter().sum::<u64>() as f64 / delays.len() as f64
            )
        };
        let joined: Vec<String> = delays.iter().map(u64::to_string).collect();
        out.push_str(&format!(
            "{tick},{},{},{},{mean}",
            events.len(),
            delays.len(),
            joined.join(" ")
        ));
        for a in &accounts {
            out.push_str(&format!(
                ",{}",
                last_bal.get(a).map(u64::to_string).unwrap_or_default()
            ));
        }
        for h in &holders {
            out.push_str(&format!(
                ",{}",
                last_vtc.get(h).map(u64::to_string).unwrap_or_default()
            ));
        }
        out.push('\n');
    }
    out
}
