//! Command-line overrides such as `--sgd.T 50000` or `--k 4` applied to
//! a JSON config.

use serde_json::Value;

use crate::error::{CliError, CliResult};

/// A `path = value` pair pulled from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: String,
    pub value: String,
}

/// Flags owned by the command-line parser rather than the config.
const RESERVED: &[&str] = &["config", "seed", "out", "help", "version"];

/// Splits `args` into overrides (`--a.b v`, `--a.b=v`, or any other long
/// flag not in [`RESERVED`]) and everything else, preserving the order of
/// the rest.
pub fn extract(args: impl IntoIterator<Item = String>) -> CliResult<(Vec<Override>, Vec<String>)> {
    let mut overrides = Vec::new();
    let mut rest = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (key.to_string(), None),
        };
        if key.is_empty() || RESERVED.contains(&key.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::config(format!("--{key} needs a value")))?,
        };
        overrides.push(Override { path: key, value });
    }
    Ok((overrides, rest))
}

/// Parses `raw` as JSON, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets the leaf at `path` (dot separated; numeric segments index arrays),
/// creating missing object keys along the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> CliResult<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::config(format!("malformed override path `{path}`")));
    }
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| CliError::config(format!("`{seg}` in `{path}` is not an array index")))?;
                let len = items.len();
                let slot =
                    items.get_mut(idx).ok_or_else(|| CliError::config(format!("index {idx} out of range (len {len}) in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::config(format!("`{seg}` in `{path}` does not name a field of an object"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

pub fn apply(root: &mut Value, overrides: &[Override]) -> CliResult<()> {
    for o in overrides {
        set_path(root, &o.path, parse_value(&o.value))?;
    }
    Ok(())
}
