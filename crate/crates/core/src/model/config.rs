use serde::{Deserialize, Serialize};

use crate::attention::AttentionKind;
use crate::error::{Error, Result};

/// Attention variant as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionName {
    Global,
    Local,
    Syntax,
    Double,
}

impl std::str::FromStr for AttentionName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(AttentionName::Global),
            "local" => Ok(AttentionName::Local),
            "syntax" | "sdatt" | "syntax-directed" => Ok(AttentionName::Syntax),
            "double" | "double-context" => Ok(AttentionName::Double),
            _ => Err(Error::Config(format!("unknown attention kind {s:?}"))),
        }
    }
}

/// Model shape, attention choice and training hyperparameters.
///
/// Serialized as one flat JSON object; every field has a default so config
/// files only need to list overrides. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub attention: AttentionName,
    /// Tree-distance radius of the syntax constraint.
    pub n: u32,
    /// Half-width of the local window.
    pub window: u32,
    pub dropout: f64,
    pub max_len: usize,
    pub seed: u64,
    pub rho: f64,
    pub epsilon: f64,
    pub init_scale: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beam_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            src_vocab_size: 200,
            tgt_vocab_size: 200,
            embedding_dim: 64,
            hidden_dim: 128,
            attention: AttentionName::Global,
            n: 4,
            window: 10,
            dropout: 0.2,
            max_len: 20,
            seed: 1,
            rho: 0.95,
            epsilon: 1e-6,
            init_scale: 0.08,
            batch_size: 16,
            epochs: 10,
            beam_size: 12,
        }
    }
}

impl ModelConfig {
    /// The full-size setting: 620-wide embeddings, 1000-wide hidden layers,
    /// 50k vocabularies, length 80, batches of 80.
    pub fn full_scale() -> Self {
        ModelConfig {
            src_vocab_size: 50_000,
            tgt_vocab_size: 50_000,
            embedding_dim: 620,
            hidden_dim: 1000,
            max_len: 80,
            batch_size: 80,
            ..Self::default()
        }
    }

    pub fn kind(&self) -> AttentionKind {
        match self.attention {
            AttentionName::Global => AttentionKind::Global,
            AttentionName::Local => AttentionKind::Local(self.window),
            AttentionName::Syntax => AttentionKind::SyntaxDirected(self.n),
            AttentionName::Double => AttentionKind::DoubleContext(self.n),
        }
    }

    pub fn with_kind(mut self, kind: AttentionKind) -> Self {
        match kind {
            AttentionKind::Global => self.attention = AttentionName::Global,
            AttentionKind::Local(d) => {
                self.attention = AttentionName::Local;
                self.window = d;
            }
            AttentionKind::SyntaxDirected(n) => {
                self.attention = AttentionName::Syntax;
                self.n = n;
            }
            AttentionKind::DoubleContext(n) => {
                self.attention = AttentionName::Double;
                self.n = n;
            }
        }
        self
    }

    /// Width of one encoder annotation (forward and backward states).
    pub fn annotation_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_len", self.max_len),
            ("beam_size", self.beam_size),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.src_vocab_size < super::vocab::NUM_SPECIAL
            || self.tgt_vocab_size < super::vocab::NUM_SPECIAL
        {
            return Err(Error::Config(
                "vocabularies must hold the 4 reserved tokens".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho {} outside (0, 1)", self.rho)));
        }
        if self.epsilon.is_nan()
            || self.epsilon <= 0.0
            || self.init_scale.is_nan()
            || self.init_scale < 0.0
        {
            return Err(Error::Config(
                "epsilon must be positive and init_scale non-negative".into(),
            ));
        }
        self.kind().validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
