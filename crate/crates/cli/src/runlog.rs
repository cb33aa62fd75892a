//! Provenance log: one JSON object per line, appended by every subcommand
//! that writes an artifact.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use claimrank::nn::sha256_hex;
use claimrank::{Error, Result};
use serde::Serialize;

pub const RUN_LOG_FILE: &str = "run.log";

/// What a subcommand read and wrote.
#[derive(Debug, Default, Clone)]
pub struct Record {
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Record {
    pub fn input(mut self, p: impl Into<PathBuf>) -> Self {
        self.inputs.push(p.into());
        self
    }

    pub fn output(mut self, p: impl Into<PathBuf>) -> Self {
        self.outputs.push(p.into());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Serialize)]
struct Hashed {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Line<'a> {
    command: &'a str,
    config: &'a serde_json::Value,
    config_hash: String,
    seed: Option<u64>,
    inputs: Vec<Hashed>,
    outputs: Vec<Hashed>,
}

/// SHA-256 of a file, or of a directory's sorted `relative-path sha` listing.
/// Run logs inside a directory are skipped so logging never changes a hash.
pub fn hash_path(p: &Path) -> Result<String> {
    if p.is_dir() {
        let mut entries = Vec::new();
        collect(p, p, &mut entries)?;
        entries.sort();
        let listing: String = entries.iter().map(|(rel, h)| format!("{rel} {h}\n")).collect();
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != RUN_LOG_FILE) {
            let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            out.push((rel, hash_path(&path)?));
        }
    }
    Ok(())
}

/// Appends one provenance line to `log`.
pub fn append(log: &Path, command: &str, config: &serde_json::Value, rec: &Record) -> Result<()> {
    let hashed = |ps: &[PathBuf]| -> Result<Vec<Hashed>> {
        ps.iter()
            .map(|p| {
                Ok(Hashed {
                    path: p.display().to_string(),
                    sha256: hash_path(p)?,
                })
            })
            .collect()
    };
    let line = Line {
        command,
        config,
        config_hash: sha256_hex(config.to_string().as_bytes()),
        seed: rec.seed,
        inputs: hashed(&rec.inputs)?,
        outputs: hashed(&rec.outputs)?,
    };
    if let Some(dir) = log.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(log)
        .map_err(|e| Error::io(log, e))?;
    let text = serde_json::to_string(&line).expect("log line serializes");
    writeln!(f, "{text}").map_err(|e| Error::io(log, e))
}

/// Default log location: `run.log` next to the first output.
pub fn default_location(rec: &Record) -> Option<PathBuf> {
    let first = rec.outputs.first()?;
    let dir = if first.is_dir() {
        first.clone()
    } else {
        first.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    Some(dir.join(RUN_LOG_FILE))
}
