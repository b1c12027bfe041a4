use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use oraclesim::counterparty::decode;
use oraclesim::harness::{
    export_metrics, load_scenario, run_scenario, verify_replay, EventLog, HarnessError,
};
use oraclesim::orisi::compute_safe_params;
use oraclesim::simchain::{classify, Digest, PolicyEra, StandardnessPolicy, Transaction};

#[derive(Parser)]
#[command(
    name = "oraclesim",
    version,
    about = "Deterministic simulator for early Bitcoin oracle protocols"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario. Exit 0 if every assertion holds, 1 if one fails,
    /// 2 if the scenario cannot be loaded.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write `<name>.jsonl` and `<name>.summary.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two event logs by digest.
    Verify { log_a: PathBuf, log_b: PathBuf },
    /// Per-tick CSV from an event log.
    Metrics { log: PathBuf, out: PathBuf },
    /// Safe parameters for an m-of-n oracle set.
    OrisiParams { m: usize, n: usize },
    /// Decode an obfuscated Counterparty payload given the key txid.
    DecodePayload { hex: String, txid: String },
    /// Standardness of a JSON transaction under a policy era.
    ClassifyTx {
        tx: PathBuf,
        #[arg(long)]
        era: PolicyEra,
    },
}

fn read_log(p: &Path) -> Result<EventLog> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    EventLog::from_jsonl(&text).with_context(|| format!("parsing {}", p.display()))
}

fn run(scenario: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<ExitCode> {
    let s = match load_scenario(scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    let report = match run_scenario(&s, seed) {
        Ok(r) => r,
        Err(e @ HarnessError::Invalid(_)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    let summary = json!({
        "scenario": report.scenario,
        "seed": report.seed,
        "events": report.log.len(),
        "digest": report.digest(),
        "passed": report.passed(),
        "failures": report.failures,
    });
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.jsonl", s.name)), report.log.to_jsonl())?;
        std::fs::write(
            dir.join(format!("{}.summary.json", s.name)),
            serde_json::to_string_pretty(&summary)? + "\n",
        )?;
    }
    println!("{summary}");
    if let Some(f) = report.failures.first() {
        eprintln!("AssertionFailed: {f}");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
        } => run(&scenario, seed, out.as_deref()),
        Cmd::Verify { log_a, log_b } => {
            let (a, b) = (read_log(&log_a)?, read_log(&log_b)?);
            let same = verify_replay(&a, &b);
            println!(
                "{}",
                json!({"identical": same, "digest_a": a.digest(), "digest_b": b.digest()})
            );
            Ok(if same {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Metrics { log, out } => {
            let csv = export_metrics(&read_log(&log)?);
            std::fs::write(&out, csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::OrisiParams { m, n } => {
            let p = compute_safe_params(m, n)?;
            println!("{}", serde_json::to_string(&p)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::DecodePayload { hex: h, txid } => {
            let payload = hex::decode(h.trim()).context("payload is not hex")?;
            let key = Digest::from_hex(txid.trim()).context("txid must be 32 bytes of hex")?;
            match decode(&payload, &key) {
                Ok(m) => {
                    println!("{}", serde_json::to_string(&m)?);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => bail!("cannot decode: {e}"),
            }
        }
        Cmd::ClassifyTx { tx, era } => {
            let text = std::fs::read_to_string(&tx)
                .with_context(|| format!("reading {}", tx.display()))?;
            let t: Transaction = serde_json::from_str(&text).context("parsing transaction")?;
            let class = classify(&t, &StandardnessPolicy::for_era(era));
            println!(
                "{}",
                json!({"txid": t.txid(), "era": era, "standardness": class})
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
