use serde::{Deserialize, Serialize};

use crate::corpus::{MAX_SEQ_LEN, NUM_SPECIALS};
use crate::error::{Error, Result};

/// Architecture hyperparameters shared by the forward, reverse and
/// language models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Word embedding width including the three affect columns.
    pub embed_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub max_decode_len: usize,
    pub mmi_lambda: f64,
    /// `false` builds a source-free language model (no encoder, no attention).
    pub conditional: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, embed_dim: usize, hidden_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim,
            hidden_size,
            num_layers: 2,
            max_decode_len: MAX_SEQ_LEN,
            mmi_lambda: 0.5,
            conditional: true,
        }
    }

    pub fn with_layers(mut self, num_layers: usize) -> Self {
        self.num_layers = num_layers;
        self
    }

    pub fn with_max_decode_len(mut self, len: usize) -> Self {
        self.max_decode_len = len;
        self
    }

    /// The unconditional counterpart of this configuration.
    pub fn unconditional(mut self) -> Self {
        self.conditional = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(
            self.vocab_size >= NUM_SPECIALS,
            "vocab_size must cover the 4 special tokens",
        )?;
        check(self.embed_dim >= 4, "embed_dim must be at least 4")?;
        check(self.hidden_size >= 1, "hidden_size must be at least 1")?;
        check(self.num_layers >= 1, "num_layers must be at least 1")?;
        check(
            self.max_decode_len >= 1,
            "max_decode_len must be at least 1",
        )?;
        check(
            self.mmi_lambda.is_finite() && self.mmi_lambda >= 0.0,
            "mmi_lambda must be finite and non-negative",
        )
    }

    /// Width of an encoder state (forward and backward halves).
    pub fn context_dim(&self) -> usize {
        if self.conditional {
            2 * self.hidden_size
        } else {
            0
        }
    }

    pub fn attention_dim(&self) -> usize {
        if self.conditional {
            self.hidden_size
        } else {
            0
        }
    }
}
