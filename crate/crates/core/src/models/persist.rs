//! Model files: a JSON envelope holding a format tag, a version, the
//! SHA-256 of the payload bytes and the payload itself.
//!
//! ```text
//! {"format":"wifiloc-model","version":1,"sha256":"<hex>","model":{...}}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use super::pipeline::TrainedModel;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "wifiloc-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    version: u32,
    sha256: String,
    model: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    format: String,
    version: u32,
    sha256: String,
    #[serde(borrow)]
    model: &'a RawValue,
}

fn payload(model: &TrainedModel) -> Result<String> {
    serde_json::to_string(model).map_err(|e| Error::format(format!("cannot serialize model: {e}")))
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The complete file contents for `model`. Identical models give identical
/// bytes.
pub fn model_to_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    model.validate()?;
    let body = payload(model)?;
    let raw = RawValue::from_string(body).map_err(|e| Error::format(e.to_string()))?;
    let envelope = EnvelopeOut {
        format: MODEL_FORMAT,
        version: MODEL_FORMAT_VERSION,
        sha256: digest(raw.get().as_bytes()),
        model: &raw,
    };
    let mut bytes = serde_json::to_vec(&envelope).map_err(|e| Error::format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let envelope: EnvelopeIn =
        serde_json::from_slice(bytes).map_err(|e| Error::format(format!("unreadable model file: {e}")))?;
    if envelope.format != MODEL_FORMAT {
        return Err(Error::format(format!(
            "not a model file (format '{}')",
            envelope.format
        )));
    }
    if envelope.version != MODEL_FORMAT_VERSION {
        return Err(Error::format(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            envelope.version
        )));
    }
    if digest(envelope.model.get().as_bytes()) != envelope.sha256 {
        return Err(Error::format("model checksum mismatch"));
    }
    let model: TrainedModel =
        serde_json::from_str(envelope.model.get()).map_err(|e| Error::format(format!("invalid model payload: {e}")))?;
    model
        .validate()
        .map_err(|e| Error::format(format!("inconsistent model: {e}")))?;
    Ok(model)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = model_to_bytes(model)?;
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    model_from_bytes(&bytes)
}

impl TrainedModel {
    /// Short content hash identifying this model.
    pub fn model_version(&self) -> Result<String> {
        let mut h = digest(payload(self)?.as_bytes());
        h.truncate(12);
        Ok(h)
    }
}
