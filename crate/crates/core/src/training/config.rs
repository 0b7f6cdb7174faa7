use std::path::Path;

use super::{HyperParams, Result, TrainConfig, TrainError};

/// One `key = value` line of a config or grid file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyValue {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; anything else without an `=` is an error.
pub fn parse_key_values(text: &str, path: &str) -> Result<Vec<KeyValue>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| TrainError::ConfigLine {
            path: path.to_owned(),
            line: i + 1,
            msg,
        };
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(err("empty key".into()));
        }
        out.push(KeyValue {
            key: key.to_owned(),
            value: v.trim().to_owned(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Applies `entries` on top of the defaults; every key must be known.
pub fn config_from_entries(entries: &[KeyValue], path: &str) -> Result<(HyperParams, TrainConfig)> {
    let mut hp = HyperParams::default();
    let mut cfg = TrainConfig::default();
    for e in entries {
        let err = |msg: String| TrainError::ConfigLine {
            path: path.to_owned(),
            line: e.line,
            msg,
        };
        let known = match hp.set(&e.key, &e.value).map_err(err)? {
            true => true,
            false => cfg.set(&e.key, &e.value).map_err(err)?,
        };
        if !known {
            return Err(err(format!("unknown key {:?}", e.key)));
        }
    }
    Ok((hp, cfg))
}

/// Reads a key=value training config file.
pub fn read_config(path: impl AsRef<Path>) -> Result<(HyperParams, TrainConfig)> {
    let p = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(path.as_ref()).map_err(|source| TrainError::Io { path: p.clone(), source })?;
    config_from_entries(&parse_key_values(&text, &p)?, &p)
}
