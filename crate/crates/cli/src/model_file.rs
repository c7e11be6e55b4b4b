//! Versioned JSON model file with a SHA-256 checksum over the body.
//!
//! Layout: `{"format":"hyperforest-model","version":1,"checksum":"<hex>","body":{...}}`.
//! The checksum covers the exact bytes of `body` as written.

use std::fs;
use std::path::Path;

use hyperforest::hyper_forest::HyperForestModel;
use hyperforest::splitter::SplitSpec;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FORMAT: &str = "hyperforest-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("model file is not valid JSON: {0}")]
    Json(String),
    #[error("not a model file (format `{0}`)")]
    WrongFormat(String),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: file says {expected}, body hashes to {found}")]
    ChecksumFailure { expected: String, found: String },
}

/// How a model came to be; kept alongside the forests for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Fingerprint of the feature table the model was trained on.
    pub dataset_fingerprint: String,
    pub split: SplitSpec,
    pub split_seed: u64,
    pub class_counts: [usize; 2],
    pub calibration_auc: f64,
    pub calibration_tpr: f64,
    pub calibration_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBody {
    pub provenance: Provenance,
    pub model: HyperForestModel,
}

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'a str,
    version: u32,
    checksum: String,
    body: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    format: String,
    version: u32,
    checksum: String,
    #[serde(borrow)]
    body: &'a RawValue,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialize and return the file text together with its checksum.
pub fn encode(body: &ModelBody) -> Result<(String, String), ModelFileError> {
    let raw = serde_json::to_string(body).map_err(|e| ModelFileError::Json(e.to_string()))?;
    let checksum = sha256_hex(raw.as_bytes());
    let raw = RawValue::from_string(raw).map_err(|e| ModelFileError::Json(e.to_string()))?;
    let text =
        serde_json::to_string(&Envelope { format: FORMAT, version: VERSION, checksum: checksum.clone(), body: &raw })
            .map_err(|e| ModelFileError::Json(e.to_string()))?;
    Ok((text, checksum))
}

pub fn decode(text: &str) -> Result<ModelBody, ModelFileError> {
    let env: EnvelopeIn = serde_json::from_str(text).map_err(|e| ModelFileError::Json(e.to_string()))?;
    if env.format != FORMAT {
        return Err(ModelFileError::WrongFormat(env.format));
    }
    if env.version != VERSION {
        return Err(ModelFileError::UnsupportedVersion(env.version));
    }
    let found = sha256_hex(env.body.get().as_bytes());
    if found != env.checksum {
        return Err(ModelFileError::ChecksumFailure { expected: env.checksum, found });
    }
    serde_json::from_str(env.body.get()).map_err(|e| ModelFileError::Json(e.to_string()))
}

/// Write the model file; returns the body checksum.
pub fn save(path: &Path, body: &ModelBody) -> Result<String, ModelFileError> {
    let (text, checksum) = encode(body)?;
    fs::write(path, text)
        .map_err(|e| ModelFileError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Ok(checksum)
}

pub fn load(path: &Path) -> Result<ModelBody, ModelFileError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ModelFileError::Io { path: path.display().to_string(), message: e.to_string() })?;
    decode(&text)
}
