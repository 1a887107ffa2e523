//! JSON configuration parsing with located errors and unknown-field checks.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown fields are errors.
    #[default]
    Strict,
    /// Unknown fields are reported as warnings.
    Lenient,
}

/// Paths of input keys that the parsed value does not carry.
fn unknown_fields(input: &Value, parsed: &Value, path: &str, out: &mut Vec<String>) {
    match (input, parsed) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get(k) {
                    Some(w) => unknown_fields(v, w, &p, out),
                    None => out.push(p),
                }
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            for (i, (v, w)) in a.iter().zip(b).enumerate() {
                unknown_fields(v, w, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// Parses `text` as `T`, naming the offending field on failure. Returns the
/// value and the unknown-field warnings (always empty in strict mode).
pub fn parse_config<T>(text: &str, source: &str, strictness: Strictness) -> Result<(T, Vec<String>)>
where
    T: DeserializeOwned + Serialize,
{
    let input: Value =
        serde_json::from_str(text).map_err(|e| Error::config(source, format!("line {} column {}: {e}", e.line(), e.column())))?;
    let value: T = serde_path_to_error::deserialize(input.clone()).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." {
            source.to_string()
        } else {
            format!("{source}:{path}")
        };
        Error::config(path, e.into_inner().to_string())
    })?;
    let mut unknown = Vec::new();
    unknown_fields(&input, &serde_json::to_value(&value)?, "", &mut unknown);
    match (strictness, unknown.first()) {
        (Strictness::Strict, Some(first)) => Err(Error::config(format!("{source}:{first}"), "unknown field")),
        _ => Ok((
            value,
            unknown
                .into_iter()
                .map(|p| format!("{source}:{p}: unknown field ignored"))
                .collect(),
        )),
    }
}

pub fn load_config<T>(path: &Path, strictness: Strictness) -> Result<(T, Vec<String>)>
where
    T: DeserializeOwned + Serialize,
{
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    parse_config(&text, &path.display().to_string(), strictness)
}

/// Canonical pretty JSON of a config value.
pub fn emit_config<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}
