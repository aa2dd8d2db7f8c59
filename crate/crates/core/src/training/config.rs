//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::affect::AffectScaling;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, DEFAULT_INIT_SCALE};
use crate::rewards::{FeedbackMode, RewardWeights, DEFAULT_EMPTY_RESPONSE_REWARD};

use super::{Baseline, OptimizerConfig, RlConfig};

/// Every key accepted in a config file.
pub const CONFIG_KEYS: [&str; 20] = [
    "vocab_size",
    "embed_dim",
    "hidden_size",
    "num_layers",
    "max_decode_len",
    "mmi_lambda",
    "init_scale",
    "affect_scaling",
    "batch_size",
    "learning_rate",
    "decay_rate",
    "gradient_clip",
    "epochs",
    "seed",
    "reward_weights",
    "baseline_decay",
    "samples_per_prompt",
    "feedback_mode",
    "empty_response_reward",
    "heldout_frac",
];

/// Model, optimizer and reward settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// When set, must match the vocabulary the run is given.
    pub vocab_size: Option<usize>,
    /// Total embedding width, including the three affect columns.
    pub embed_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub max_decode_len: usize,
    pub mmi_lambda: f64,
    pub init_scale: f64,
    pub affect_scaling: AffectScaling,
    pub optimizer: OptimizerConfig,
    pub reward_weights: RewardWeights,
    pub baseline_decay: f64,
    pub samples_per_prompt: usize,
    pub feedback_mode: FeedbackMode,
    pub empty_response_reward: f64,
    /// Held-out share of rated reviews when training the analyzer.
    pub heldout_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vocab_size: None,
            embed_dim: 35,
            hidden_size: 32,
            num_layers: 2,
            max_decode_len: crate::corpus::MAX_SEQ_LEN,
            mmi_lambda: 0.5,
            init_scale: DEFAULT_INIT_SCALE,
            affect_scaling: AffectScaling::Raw,
            optimizer: OptimizerConfig::cornell(),
            reward_weights: RewardWeights::cornell(),
            baseline_decay: Baseline::DEFAULT_DECAY,
            samples_per_prompt: 1,
            feedback_mode: FeedbackMode::Binary,
            empty_response_reward: DEFAULT_EMPTY_RESPONSE_REWARD,
            heldout_frac: 0.2,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value {value:?} for `{key}`")))
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown or repeated keys are rejected.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {line_no}: unknown key `{key}`"
                )));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {line_no}: duplicate key `{key}`"
                )));
            }
            cfg.set(key, value, line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "vocab_size" => self.vocab_size = Some(parse(key, value, line)?),
            "embed_dim" => self.embed_dim = parse(key, value, line)?,
            "hidden_size" => self.hidden_size = parse(key, value, line)?,
            "num_layers" => self.num_layers = parse(key, value, line)?,
            "max_decode_len" => self.max_decode_len = parse(key, value, line)?,
            "mmi_lambda" => self.mmi_lambda = parse(key, value, line)?,
            "init_scale" => self.init_scale = parse(key, value, line)?,
            "affect_scaling" => {
                self.affect_scaling = match value {
                    "raw" => AffectScaling::Raw,
                    "symmetric" => AffectScaling::Symmetric,
                    _ => {
                        return Err(Error::Config(format!(
                            "line {line}: affect_scaling must be raw or symmetric"
                        )))
                    }
                }
            }
            "batch_size" => self.optimizer.batch_size = parse(key, value, line)?,
            "learning_rate" => self.optimizer.learning_rate = parse(key, value, line)?,
            "decay_rate" => self.optimizer.decay_rate = parse(key, value, line)?,
            "gradient_clip" => self.optimizer.gradient_clip = parse(key, value, line)?,
            "epochs" => self.optimizer.epochs = parse(key, value, line)?,
            "seed" => self.optimizer.seed = parse(key, value, line)?,
            "reward_weights" => {
                self.reward_weights = value
                    .parse()
                    .map_err(|e| Error::Config(format!("line {line}: {e}")))?
            }
            "baseline_decay" => self.baseline_decay = parse(key, value, line)?,
            "samples_per_prompt" => self.samples_per_prompt = parse(key, value, line)?,
            "feedback_mode" => {
                self.feedback_mode = value
                    .parse()
                    .map_err(|e| Error::Config(format!("line {line}: {e}")))?
            }
            "empty_response_reward" => self.empty_response_reward = parse(key, value, line)?,
            "heldout_frac" => self.heldout_frac = parse(key, value, line)?,
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.embed_dim <= crate::affect::AFFECT_DIM {
            return Err(Error::Config(
                "embed_dim must exceed the 3 affect columns".into(),
            ));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.baseline_decay) {
            return Err(Error::Config("baseline_decay must be in [0, 1]".into()));
        }
        if self.samples_per_prompt == 0 {
            return Err(Error::Config(
                "samples_per_prompt must be at least 1".into(),
            ));
        }
        if !self.empty_response_reward.is_finite() {
            return Err(Error::Config("empty_response_reward must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.heldout_frac) {
            return Err(Error::Config("heldout_frac must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Model configuration for a vocabulary of `vocab_size` tokens.
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        if let Some(expected) = self.vocab_size {
            if expected != vocab_size {
                return Err(Error::ConfigMismatch {
                    field: "vocab_size",
                    expected: expected.to_string(),
                    found: vocab_size.to_string(),
                });
            }
        }
        let cfg = ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_size: self.hidden_size,
            num_layers: self.num_layers,
            max_decode_len: self.max_decode_len,
            mmi_lambda: self.mmi_lambda,
            conditional: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rl_config(&self) -> RlConfig {
        RlConfig {
            optimizer: self.optimizer,
            baseline_decay: self.baseline_decay,
            baseline_init: 0.0,
            samples_per_prompt: self.samples_per_prompt,
        }
    }

    /// Every setting as key/value strings, in the file syntax.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let w = self.reward_weights.as_array();
        let entries = [
            (
                "vocab_size",
                self.vocab_size.map_or("auto".into(), |v| v.to_string()),
            ),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_size", self.hidden_size.to_string()),
            ("num_layers", self.num_layers.to_string()),
            ("max_decode_len", self.max_decode_len.to_string()),
            ("mmi_lambda", self.mmi_lambda.to_string()),
            ("init_scale", self.init_scale.to_string()),
            (
                "affect_scaling",
                match self.affect_scaling {
                    AffectScaling::Raw => "raw".into(),
                    AffectScaling::Symmetric => "symmetric".into(),
                },
            ),
            ("batch_size", self.optimizer.batch_size.to_string()),
            ("learning_rate", self.optimizer.learning_rate.to_string()),
            ("decay_rate", self.optimizer.decay_rate.to_string()),
            ("gradient_clip", self.optimizer.gradient_clip.to_string()),
            ("epochs", self.optimizer.epochs.to_string()),
            ("seed", self.optimizer.seed.to_string()),
            (
                "reward_weights",
                format!("{},{},{},{}", w[0], w[1], w[2], w[3]),
            ),
            ("baseline_decay", self.baseline_decay.to_string()),
            ("samples_per_prompt", self.samples_per_prompt.to_string()),
            (
                "feedback_mode",
                match self.feedback_mode {
                    FeedbackMode::Binary => "binary".into(),
                    FeedbackMode::Margin => "margin".into(),
                },
            ),
            (
                "empty_response_reward",
                self.empty_response_reward.to_string(),
            ),
            ("heldout_frac", self.heldout_frac.to_string()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}
