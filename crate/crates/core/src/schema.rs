//! Shared machinery for loading the pipeline's JSON artifact files.
//!
//! Every loader follows the same shape: parse bytes, police unknown object
//! keys against a per-file field table (reject in strict mode, warn in
//! lenient mode), then deserialize with field-path error reporting.

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemaMode {
    Strict,
    #[default]
    Lenient,
}

/// Allowed keys for the object found at a normalized path.
///
/// Paths use `.` between object keys and `[]` for array elements, e.g.
/// `"lines[].resolved_name"`. The root object has path `""`. Objects at
/// unlisted paths are free-form (maps with caller-defined keys) and are not
/// policed.
pub struct FieldTable(pub &'static [(&'static str, &'static [&'static str])]);

impl FieldTable {
    fn keys_at(&self, path: &str) -> Option<&'static [&'static str]> {
        self.0.iter().find(|(p, _)| *p == path).map(|(_, k)| *k)
    }
}

pub fn parse_json(bytes: &[u8]) -> Result<Value> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Walk `value` and handle object keys not present in `table`.
///
/// Strict mode fails on the first unknown key; lenient mode records one
/// warning per unknown key and keeps going.
pub fn check_unknown_fields(
    value: &Value,
    table: &FieldTable,
    mode: SchemaMode,
    warnings: &mut Vec<String>,
) -> Result<()> {
    walk(value, "", table, mode, warnings)
}

fn walk(
    value: &Value,
    path: &str,
    table: &FieldTable,
    mode: SchemaMode,
    warnings: &mut Vec<String>,
) -> Result<()> {
    match value {
        Value::Object(map) => {
            let Some(keys) = table.keys_at(path) else {
                // free-form object; nothing to police below it
                return Ok(());
            };
            for (key, child) in map {
                if !keys.contains(&key.as_str()) {
                    let loc = if path.is_empty() {
                        key.clone()
                    } else {
                        format!("{path}.{key}")
                    };
                    match mode {
                        SchemaMode::Strict => {
                            return Err(Error::Validation(format!("unknown field `{loc}`")));
                        }
                        SchemaMode::Lenient => {
                            warnings.push(format!("ignoring unknown field `{loc}`"));
                        }
                    }
                    continue;
                }
                let child_path = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                walk(child, &child_path, table, mode, warnings)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            let elem_path = format!("{path}[]");
            for item in items {
                walk(item, &elem_path, table, mode, warnings)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Deserialize a checked `Value`, naming the offending field on failure.
pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Validation(format!("invalid field `{path}`: {}", e.inner()))
    })
}

/// Parse + unknown-field check + typed deserialize in one call.
pub fn load_checked<T: DeserializeOwned>(
    bytes: &[u8],
    table: &FieldTable,
    mode: SchemaMode,
    warnings: &mut Vec<String>,
) -> Result<T> {
    let value = parse_json(bytes)?;
    check_unknown_fields(&value, table, mode, warnings)?;
    from_value(value)
}

/// A loaded artifact together with non-fatal observations made on the way in.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Loaded<T> {
    pub fn clean(value: T) -> Self {
        Loaded {
            value,
            warnings: Vec::new(),
        }
    }
}

/// Canonical artifact rendering: pretty JSON plus trailing newline.
///
/// Stage outputs are byte-compared by the caching layer and by the
/// determinism tests, so all writers funnel through here.
pub fn to_pretty_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact types serialize infallibly");
    out.push(b'\n');
    out
}
