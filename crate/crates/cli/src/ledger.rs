//! Append-only JSON-lines run ledger.
//!
//! One writer per file is assumed: each record goes out as a single
//! `O_APPEND` write, with no locking beyond that.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use lzscatter::models::ModelDescriptor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const LEDGER_ENV: &str = "LZSCATTER_LEDGER";
pub const DEFAULT_LEDGER: &str = "lzscatter-ledger.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDigest {
    /// SHA-256 of the emitted result, hex.
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    pub pass: bool,
    pub exit_code: i32,
    /// Oracle spread above its convergence threshold.
    #[serde(default)]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub timestamp: String,
    pub command_line: Vec<String>,
    pub descriptor: Option<ModelDescriptor>,
    pub method: Option<String>,
    pub digest: ResultDigest,
    pub flags: RunFlags,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunRecord {
    pub fn now(command_line: Vec<String>, result: &str) -> Self {
        Self {
            timestamp: chrono::Utc::now().to_rfc3339(),
            command_line,
            descriptor: None,
            method: None,
            digest: ResultDigest { sha256: sha256_hex(result.as_bytes()), error_estimate: None },
            flags: RunFlags { pass: true, exit_code: 0, flagged: false },
        }
    }
}

/// `--ledger`, else the environment override, else the default file.
pub fn resolve_path(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(LEDGER_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_LEDGER))
}

pub fn append(path: &Path, record: &RunRecord) -> std::io::Result<()> {
    let mut line = serde_json::to_string(record).expect("record serialization cannot fail");
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())
}

pub fn read(path: &Path) -> std::io::Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
