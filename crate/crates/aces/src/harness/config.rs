//! Flat key-value experiment config files.
//!
//! The format mirrors the CLI flags one key per line (`episodes = 150`),
//! with `#` comment lines and blank lines ignored. Flags given on the
//! command line override file values.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Keys accepted in a config file, matching the `run` flags.
pub const KNOWN_KEYS: &[&str] = &[
    "strategy",
    "nnn",
    "episodes",
    "runs",
    "seed",
    "eval-interval",
    "noise-std",
    "out",
];

/// Parses a config file into key-value pairs, rejecting unknown keys.
pub fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected 'key = value', got '{line}'",
                path.display(),
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "{}:{}: unknown key '{key}'",
                path.display(),
                lineno + 1
            )));
        }
        map.insert(key, value);
    }
    Ok(map)
}
