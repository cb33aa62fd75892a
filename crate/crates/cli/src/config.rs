//! Line-based config files.
//!
//! ```text
//! # applies to every subcommand that has the flag
//! seed = 7
//!
//! [train]
//! lr = 0.01
//! hidden = 16,8
//! ```
//!
//! Keys are long flag names (`weight_decay` and `weight-decay` both work).
//! Values are spliced into the command line right after the subcommand, so
//! anything given explicitly on the command line wins.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use claimrank::{Error, Result};
use clap::Command;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(content: &str, origin: &Path) -> Result<Vec<Entry>> {
    let mut section = None;
    let mut out = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            path: origin.display().to_string(),
            line: i + 1,
            message: msg.to_string(),
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| bad("unterminated section header"))?.trim();
            if name.is_empty() {
                return Err(bad("empty section name"));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(bad("empty key"));
        }
        out.push(Entry {
            section: section.clone(),
            key,
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

const GLOBAL_VALUED: [&str; 2] = ["--config", "--run-log"];

/// Position and name of the subcommand token in `argv`.
fn find_subcommand(argv: &[OsString]) -> Option<(usize, String)> {
    let mut i = 1;
    while i < argv.len() {
        let tok = argv[i].to_string_lossy();
        if GLOBAL_VALUED.contains(&tok.as_ref()) {
            i += 2;
            continue;
        }
        if !tok.starts_with('-') {
            return Some((i, tok.into_owned()));
        }
        i += 1;
    }
    None
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(tok) = it.next() {
        let s = tok.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn truthy(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Returns `argv` with config-file values inserted after the subcommand.
/// Unsectioned keys the subcommand does not know are ignored; unknown keys
/// in the subcommand's own section are an error.
pub fn merge(argv: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = parse(&content, path)?;
    let Some((pos, name)) = find_subcommand(&argv) else {
        return Ok(argv);
    };
    let Some(sub) = cmd.find_subcommand(&name) else {
        return Ok(argv);
    };

    let mut chosen: Vec<&Entry> = Vec::new();
    for e in entries.iter().filter(|e| e.section.is_none()) {
        chosen.retain(|c| c.key != e.key);
        chosen.push(e);
    }
    for e in entries.iter().filter(|e| e.section.as_deref() == Some(name.as_str())) {
        chosen.retain(|c| c.key != e.key);
        chosen.push(e);
    }

    let mut extra: Vec<OsString> = Vec::new();
    for e in chosen {
        let arg = sub.get_arguments().find(|a| a.get_long() == Some(e.key.as_str()));
        let Some(arg) = arg else {
            if e.section.is_some() {
                return Err(Error::Config(format!(
                    "{}:{}: `{name}` has no option --{}",
                    path.display(),
                    e.line,
                    e.key
                )));
            }
            continue;
        };
        if arg.get_action().takes_values() {
            extra.push(format!("--{}", e.key).into());
            extra.push(e.value.clone().into());
        } else {
            let on = truthy(&e.value).ok_or_else(|| {
                Error::Config(format!("{}:{}: {} expects true or false", path.display(), e.line, e.key))
            })?;
            if on {
                extra.push(format!("--{}", e.key).into());
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}
