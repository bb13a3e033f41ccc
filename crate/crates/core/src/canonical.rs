//! Canonical serialization and content digests.
//!
//! Requests, artifacts, and cache keys are digested over a canonical JSON
//! form: object keys sorted, floats in shortest round-trip notation. Two
//! semantically equal values always produce the same digest, regardless of
//! how their maps were built.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Canonical JSON text for any serializable value.
///
/// Routes through `serde_json::Value`, whose object representation keeps
/// keys sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::Validation(format!("cannot canonicalize value: {e}")))?;
    serde_json::to_string(&v).map_err(|e| Error::Validation(format!("cannot serialize: {e}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Digest of an operation name plus its canonicalized request body.
pub fn request_digest<T: Serialize>(op: &str, body: &T) -> Result<String> {
    let canon = canonical_json(body)?;
    let mut hasher = Sha256::new();
    hasher.update(op.as_bytes());
    hasher.update(b"\n");
    hasher.update(canon.as_bytes());
    Ok(hex::encode(hasher.finalize()))
}
