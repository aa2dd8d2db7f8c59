//! Encoder-decoder model, decoding strategies and checkpoints.

pub(crate) mod checkpoint;
mod config;
mod decode;
mod lstm;
pub(crate) mod math;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::ModelConfig;
pub use decode::{
    greedy_decode, mmi_rerank_scored, mmi_rescore, n_best_decode, sample_decode,
    sample_decode_with, Candidate, Sample,
};
pub use network::{DecoderSession, DecoderState, Seq2SeqModel, DEFAULT_INIT_SCALE};
pub(crate) use params::Layout;
pub use params::ParamGroup;

use crate::corpus::EOS;
use crate::error::{Error, Result};

/// Unconditional model supplying log p(T) for MMI reranking.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel(Seq2SeqModel);

impl LanguageModel {
    pub fn new(config: ModelConfig, seed: u64, init_scale: f64) -> Result<Self> {
        Ok(LanguageModel(Seq2SeqModel::new(
            config.unconditional(),
            seed,
            init_scale,
        )?))
    }

    pub fn from_model(model: Seq2SeqModel) -> Result<Self> {
        if model.config().conditional {
            return Err(Error::InvalidArgument(
                "language model must be unconditional".into(),
            ));
        }
        Ok(LanguageModel(model))
    }

    /// log p(target), summed over the target tokens and EOS.
    pub fn log_prob(&self, target: &[usize]) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::EmptyInput { what: "target" });
        }
        let steps: Vec<usize> = target.iter().copied().chain([EOS]).collect();
        self.steps_log_prob(&steps)
    }

    /// Summed log-probability of exactly the given emitted tokens.
    pub fn steps_log_prob(&self, steps: &[usize]) -> Result<f64> {
        Ok(self.0.step_log_probs(&[], steps)?.iter().sum())
    }

    pub fn model(&self) -> &Seq2SeqModel {
        &self.0
    }

    pub fn model_mut(&mut self) -> &mut Seq2SeqModel {
        &mut self.0
    }

    pub fn into_inner(self) -> Seq2SeqModel {
        self.0
    }
}
