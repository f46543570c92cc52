//! JSON checkpoints with bit-exact parameter storage.
//!
//! Each weight is stored as `{"shape": [rows, cols], "values": base64}` where
//! the payload is the little-endian bytes of its `f64` values.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ModelParams, ModelWeights};
use super::vocab::Vocab;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabs {
    pub source: Vocab,
    pub target: Vocab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Option<Vocabs>,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: [usize; 2],
    values: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    format_version: u32,
    config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<Vocabs>,
    params: IndexMap<String, StoredTensor>,
}

fn encode_tensor(t: &Tensor) -> StoredTensor {
    let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    StoredTensor {
        shape: t.shape(),
        values: STANDARD.encode(bytes),
    }
}

fn decode_tensor(name: &str, s: &StoredTensor) -> Result<Tensor> {
    let bad = |msg: String| Error::Checkpoint(format!("weight {name}: {msg}"));
    let bytes = STANDARD.decode(&s.values).map_err(|e| bad(e.to_string()))?;
    let [r, c] = s.shape;
    if bytes.len() != r.saturating_mul(c).saturating_mul(8) {
        return Err(bad(format!("{} bytes for shape {r}x{c}", bytes.len())));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(r, c, data).map_err(|e| bad(e.to_string()))
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams) -> Self {
        Checkpoint {
            config,
            vocab: None,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let stored = Stored {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self
                .params
                .named()
                .into_iter()
                .map(|(n, t)| (n, encode_tensor(t)))
                .collect(),
        };
        serde_json::to_string(&stored).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let version: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        match version
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "format version {v}, this build reads version {FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Checkpoint("missing format_version".into())),
        }
        let stored: Stored =
            serde_json::from_value(version).map_err(|e| Error::Checkpoint(e.to_string()))?;
        stored
            .config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("stored config: {e}")))?;
        if stored.params.len() != ModelWeights::shapes(&stored.config).named().len() {
            return Err(Error::Checkpoint(format!(
                "{} weights stored, config implies {}",
                stored.params.len(),
                ModelWeights::shapes(&stored.config).named().len()
            )));
        }
        let params = ModelWeights::shapes(&stored.config).try_map(&mut |name, shape| {
            let s = stored
                .params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing weight {name}")))?;
            if s.shape != *shape {
                return Err(Error::Checkpoint(format!(
                    "weight {name} has shape {:?}, config implies {shape:?}",
                    s.shape
                )));
            }
            decode_tensor(name, s)
        })?;
        Ok(Checkpoint {
            config: stored.config,
            vocab: stored.vocab,
            params,
        })
    }

    /// Writes via a temporary file in the target directory, then renames.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Parameters rearranged for `kind`-style inference. A checkpoint lacking
    /// weights that `cfg` needs is a configuration error.
    pub fn params_for(&self, cfg: &ModelConfig) -> Result<ModelParams> {
        self.params.for_config(cfg)
    }
}

/// Replaces `path` with `bytes` so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
