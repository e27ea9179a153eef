//! Versioned binary model container.
//!
//! ```text
//! magic      8 bytes  "CITEMDL\0"
//! version    u32 LE
//! header_len u64 LE, then header_len bytes of JSON (config, scheme, vocabulary)
//! n_params   u64 LE, then n_params f64 LE
//! sha256     32 bytes over everything above
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabelScheme;
use crate::error::{Error, Result};
use crate::models::classifier::Classifier;
use crate::models::config::ModelConfig;
use crate::models::vocab::Vocabulary;

pub const MODEL_MAGIC: &[u8; 8] = b"CITEMDL\0";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    scheme: LabelScheme,
    vocabulary: Vocabulary,
    toolkit_version: String,
}

pub fn model_to_bytes(classifier: &Classifier) -> Result<Vec<u8>> {
    let m = classifier
        .native_parts()
        .ok_or_else(|| Error::Unsupported("external backend models are saved by their backend".into()))?;
    let params = m.params.as_deref().ok_or(Error::Untrained)?;
    let header = serde_json::to_vec(&Header {
        config: m.config.clone(),
        scheme: m.scheme.clone(),
        vocabulary: m.vocab.clone(),
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
    })?;
    let mut out = Vec::with_capacity(8 + 4 + 8 + header.len() + 8 + params.len() * 8 + 32);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Integrity("truncated model file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Classifier> {
    if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Integrity("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    if bytes.len() < 12 + 32 {
        return Err(Error::Integrity("truncated model file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity("checksum mismatch".into()));
    }
    let mut c = Cursor { buf: body, pos: 12 };
    let header_len = c.u64()? as usize;
    let header: Header = serde_json::from_slice(c.take(header_len)?)
        .map_err(|e| Error::Integrity(format!("bad header: {e}")))?;
    let n = c.u64()? as usize;
    if n.checked_mul(8) != Some(body.len() - c.pos) {
        return Err(Error::Integrity("parameter block length mismatch".into()));
    }
    let params = c
        .take(n * 8)?
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    header.config.validate()?;
    Classifier::native(header.config, header.scheme, header.vocabulary, params)
}

pub fn save_model(classifier: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(classifier)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
