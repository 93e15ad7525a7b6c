//! Output directory layout:
//!
//! ```text
//! config.json              resolved config with its hash
//! replicates_N<n>.jsonl    one line per replicate outcome, appended as runs finish
//! summary_N<n>.json        checksummed ensemble summary
//! kernel_report.json       analyze-kernel
//! verify_report.json       verify
//! limit_paths.csv          sample-limit paths, one row per path
//! limit_provenance.json    sample-limit coefficients and representation check
//! ```
//!
//! Every JSON file is an [`Envelope`]; JSONL lines carry the hash themselves.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use brw_occupation::occupation::{content_hash, ReplicateOutcome};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub tool_version: String,
    pub config_hash: String,
    /// SHA-256 of the canonical JSON form of `payload`.
    pub checksum: String,
    pub payload: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateLine {
    pub config_hash: String,
    pub tool_version: String,
    pub n: f64,
    pub index: u64,
    pub outcome: ReplicateOutcome,
}

pub fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{}: {e}", path.display()))
}

pub fn rung_tag(n: f64) -> String {
    format!("N{n}")
}

pub fn replicates_path(dir: &Path, n: f64) -> PathBuf {
    dir.join(format!("replicates_{}.jsonl", rung_tag(n)))
}

pub fn summary_path(dir: &Path, n: f64) -> PathBuf {
    dir.join(format!("summary_{}.json", rung_tag(n)))
}

pub fn write_envelope<T: Serialize>(path: &Path, hash: &str, payload: &T) -> Result<(), CliError> {
    let env = Envelope {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: hash.to_string(),
        checksum: content_hash(payload),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Reads an envelope, checking its checksum and that it belongs to `hash`.
pub fn read_envelope<T: Serialize + DeserializeOwned>(path: &Path, hash: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| CliError::Integrity(format!("{}: unreadable ({e})", path.display())))?;
    if content_hash(&env.payload) != env.checksum {
        return Err(CliError::Integrity(format!("{}: checksum mismatch", path.display())));
    }
    if env.config_hash != hash {
        return Err(CliError::Integrity(format!(
            "{}: written for config {} but the current config is {hash}",
            path.display(),
            env.config_hash
        )));
    }
    Ok(env.payload)
}

/// Completed outcomes of rung `n` by replicate index. Lines from another
/// config, or a torn final line, are integrity errors.
pub fn read_replicates(path: &Path, hash: &str, n: f64) -> Result<BTreeMap<u64, ReplicateOutcome>, CliError> {
    let mut done = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(io_err(path)(e)),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReplicateLine = serde_json::from_str(&line)
            .map_err(|e| CliError::Integrity(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if rec.config_hash != hash || rec.n != n {
            return Err(CliError::Integrity(format!(
                "{} line {}: record of config {} at N = {} mixed into config {hash} at N = {n}",
                path.display(),
                i + 1,
                rec.config_hash,
                rec.n
            )));
        }
        done.insert(rec.index, rec.outcome);
    }
    Ok(done)
}

pub fn append_replicates(path: &Path, lines: &[ReplicateLine]) -> Result<(), CliError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let mut buf = String::new();
    for l in lines {
        buf.push_str(&serde_json::to_string(l).expect("serializable"));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}
