//! Versioned artifact persistence with atomic writes.
//!
//! Model files are JSON with an envelope carrying a format tag, a schema
//! version, and an artifact kind. Floating-point payloads use serde_json's
//! shortest round-trip formatting, so identical in-memory values always
//! serialize to identical bytes.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "quasistiff-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    payload: T,
}

/// Writes bytes to `path` atomically: the data lands in `path.tmp` first and
/// is renamed into place, so readers never observe a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Serializes a model artifact to versioned JSON at `path`.
pub fn save_model<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    let envelope = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind.to_string(),
        payload,
    };
    let mut bytes =
        serde_json::to_vec_pretty(&envelope).map_err(|e| Error::data(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Loads a model artifact written by [`save_model`], checking the format
/// tag, schema version, and artifact kind before deserializing the payload.
pub fn load_model<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let envelope: Envelope<serde_json::Value> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if envelope.format != FORMAT {
        return Err(Error::data(format!(
            "{}: unexpected format `{}` (expected `{FORMAT}`)",
            path.display(),
            envelope.format
        )));
    }
    if envelope.version != VERSION {
        return Err(Error::data(format!(
            "{}: unsupported schema version {} (expected {VERSION})",
            path.display(),
            envelope.version
        )));
    }
    if envelope.kind != kind {
        return Err(Error::data(format!(
            "{}: artifact kind `{}` does not match expected `{kind}`",
            path.display(),
            envelope.kind
        )));
    }
    serde_json::from_value(envelope.payload)
        .map_err(|e| Error::data(format!("{}: payload: {e}", path.display())))
}
