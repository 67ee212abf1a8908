//! Flat `key = value` configuration for [`SolverConstants`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::SolverConstants;

/// Splits `key=value`, trimming whitespace around both parts.
pub fn parse_assignment(s: &str) -> Result<(&str, &str)> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{s}`")))?;
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() || value.is_empty() {
        return Err(Error::Config(format!("expected key=value, got `{s}`")));
    }
    Ok((key, value))
}

/// Applies every assignment of `text` in order. Blank lines and text after
/// `#` are ignored.
pub fn apply_config(text: &str, consts: &mut SolverConstants) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = parse_assignment(line)
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        consts
            .set(key, value)
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
    }
    Ok(())
}

pub fn load_config(path: &Path, consts: &mut SolverConstants) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    apply_config(&text, consts)
}
