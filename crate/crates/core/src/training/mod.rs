//! Maximum-likelihood pretraining and policy-gradient fine-tuning.

mod config;
mod gradcheck;

pub use config::{RunConfig, CONFIG_KEYS};
pub use gradcheck::{
    gradient_check, GradientCheckReport, GroupError, DEFAULT_EPSILON, RELATIVE_ERROR_FLOOR,
};

use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, DialogPair, EOS};
use crate::error::{Error, Result};
use crate::eval::perplexity;
use crate::model::{sample_decode_with, LanguageModel, Sample, Seq2SeqModel};
use crate::rewards::{RewardBreakdown, RewardFn};

/// Examples per parallel work unit. Fixed so the reduction order, and
/// therefore every bit of the result, does not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-epoch geometric decay: epoch k uses `lr * (1 - decay_rate)^k`.
    pub decay_rate: f64,
    /// Global gradient-norm threshold.
    pub gradient_clip: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn cornell() -> Self {
        OptimizerConfig {
            batch_size: 128,
            learning_rate: 0.01,
            decay_rate: 0.0095,
            gradient_clip: 1.0,
            epochs: 50,
            seed: 0,
        }
    }

    pub fn yelp() -> Self {
        OptimizerConfig {
            batch_size: 512,
            learning_rate: 0.15,
            decay_rate: 0.01,
            gradient_clip: 1.0,
            epochs: 75,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.gradient_clip.is_nan() || self.gradient_clip <= 0.0 {
            return bad("gradient_clip must be positive");
        }
        if !(0.0..1.0).contains(&self.decay_rate) {
            return bad("decay_rate must be in [0, 1)");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * (1.0 - self.decay_rate).powi(epoch as i32)
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::cornell()
    }
}

/// Rescales `grad` so its L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Exponential moving average of episode rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub value: f64,
    /// Weight kept on the old value; 1.0 freezes the baseline.
    pub decay: f64,
}

impl Baseline {
    pub const DEFAULT_DECAY: f64 = 0.95;

    pub fn new(decay: f64) -> Self {
        Baseline { value: 0.0, decay }
    }

    pub fn update(&mut self, reward: f64) {
        self.value = self.decay * self.value + (1.0 - self.decay) * reward;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-token negative log-likelihood (MLE modes).
    pub loss: Option<f64>,
    /// Mean combined reward of the sampled responses (RL mode).
    pub mean_reward: Option<f64>,
    pub validation_perplexity: Option<f64>,
    /// Largest gradient norm seen before clipping.
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
}

/// (source, emitted steps, loss weight)
type Item<'a> = (&'a [usize], Vec<usize>, f64);

/// Sums `weight * grad(-log p(steps | source))` over `items` in a fixed
/// order; returns the gradient and the summed log-probability.
fn batch_gradient(model: &Seq2SeqModel, items: &[Item<'_>]) -> Result<(Vec<f64>, f64)> {
    let n = model.num_params();
    let parts: Vec<Result<(Vec<f64>, f64)>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let mut lp = 0.0;
            for (src, steps, w) in chunk {
                lp += model.accumulate_gradient(src, steps, *w, &mut g)?;
            }
            Ok((g, lp))
        })
        .collect();
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    for part in parts {
        let (g, lp) = part?;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        total += lp;
    }
    Ok((grad, total))
}

fn sgd_step(model: &mut Seq2SeqModel, grad: &mut [f64], lr: f64, clip: f64) -> f64 {
    let norm = clip_global_norm(grad, clip);
    for (p, g) in model.params_mut().iter_mut().zip(grad.iter()) {
        *p -= lr * g;
    }
    norm
}

/// Teacher-forced training on (source, target) pairs.
fn train_pairs(
    model: &mut Seq2SeqModel,
    train: &[(&[usize], &[usize])],
    validation: &[DialogPair],
    cfg: &OptimizerConfig,
    mode: &str,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if train.iter().any(|(_, t)| t.is_empty()) {
        return Err(Error::EmptyInput { what: "target" });
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut nll = 0.0;
        let mut tokens = 0usize;
        let mut max_norm: f64 = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let batch_tokens: usize = batch.iter().map(|&i| train[i].1.len() + 1).sum();
            let weight = 1.0 / batch_tokens as f64;
            let items: Vec<Item<'_>> = batch
                .iter()
                .map(|&i| {
                    let (src, tgt) = train[i];
                    (src, tgt.iter().copied().chain([EOS]).collect(), weight)
                })
                .collect();
            let (mut grad, lp) = batch_gradient(model, &items)?;
            nll -= lp;
            tokens += batch_tokens;
            max_norm = max_norm.max(sgd_step(model, &mut grad, lr, cfg.gradient_clip));
        }
        let validation_perplexity = if validation.is_empty() {
            None
        } else {
            Some(perplexity(model, validation)?)
        };
        let loss = nll / tokens as f64;
        info!(
            "{mode} epoch {epoch}: lr {lr:.6} loss {loss:.6} valid ppl {}",
            validation_perplexity.map_or("n/a".to_string(), |p| format!("{p:.4}"))
        );
        records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            loss: Some(loss),
            mean_reward: None,
            validation_perplexity,
            max_grad_norm: max_norm,
        });
    }
    Ok(TrainReport {
        mode: mode.to_string(),
        seed: cfg.seed,
        epochs: records,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Minimizes mean per-token NLL of targets given sources on the training
/// split; reports validation perplexity after each epoch.
pub fn train_mle(
    model: &mut Seq2SeqModel,
    split: &CorpusSplit<DialogPair>,
    cfg: &OptimizerConfig,
) -> Result<TrainReport> {
    let train: Vec<(&[usize], &[usize])> = split
        .train
        .iter()
        .map(|p| (p.source.as_slice(), p.target.as_slice()))
        .collect();
    train_pairs(model, &train, &split.validation, cfg, "mle")
}

/// Trains `model` to predict sources from targets.
pub fn train_reverse(
    model: &mut Seq2SeqModel,
    split: &CorpusSplit<DialogPair>,
    cfg: &OptimizerConfig,
) -> Result<TrainReport> {
    let reversed = split.map(DialogPair::reversed);
    let train: Vec<(&[usize], &[usize])> = reversed
        .train
        .iter()
        .map(|p| (p.source.as_slice(), p.target.as_slice()))
        .collect();
    train_pairs(model, &train, &reversed.validation, cfg, "reverse")
}

/// Trains the unconditional model on bare target sequences.
pub fn train_language_model(
    model: &mut LanguageModel,
    targets: &[Vec<usize>],
    validation: &[Vec<usize>],
    cfg: &OptimizerConfig,
) -> Result<TrainReport> {
    let train: Vec<(&[usize], &[usize])> =
        targets.iter().map(|t| (&[][..], t.as_slice())).collect();
    let validation: Vec<DialogPair> = validation
        .iter()
        .map(|t| DialogPair {
            source: Vec::new(),
            target: t.clone(),
            raw_source: String::new(),
            raw_target: String::new(),
        })
        .collect();
    train_pairs(model.model_mut(), &train, &validation, cfg, "lm")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlConfig {
    pub optimizer: OptimizerConfig,
    pub baseline_decay: f64,
    /// Starting baseline value.
    pub baseline_init: f64,
    pub samples_per_prompt: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            optimizer: OptimizerConfig::default(),
            baseline_decay: Baseline::DEFAULT_DECAY,
            baseline_init: 0.0,
            samples_per_prompt: 1,
        }
    }
}

/// REINFORCE with a moving-average baseline.
///
/// For every prompt a response is sampled from the current policy and
/// scored as a whole. The update ascends
/// `(reward - baseline) * grad(sum of step log-probs)`, averaged over the
/// batch, clipped, and scaled by the epoch's learning rate. Advantages use
/// the baseline as it stood at the start of the batch.
pub fn finetune_rl(
    model: &mut Seq2SeqModel,
    prompts: &[Vec<usize>],
    reward: &dyn RewardFn,
    cfg: &RlConfig,
) -> Result<TrainReport> {
    let opt = &cfg.optimizer;
    opt.validate()?;
    if prompts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if prompts.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput { what: "prompt" });
    }
    if cfg.samples_per_prompt == 0 {
        return Err(Error::Config(
            "samples_per_prompt must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.baseline_decay) {
        return Err(Error::Config("baseline_decay must be in [0, 1]".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut baseline = Baseline {
        value: cfg.baseline_init,
        decay: cfg.baseline_decay,
    };
    let mut order: Vec<usize> = (0..prompts.len()).collect();
    let mut records = Vec::with_capacity(opt.epochs);
    for epoch in 0..opt.epochs {
        let lr = opt.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut reward_sum = 0.0;
        let mut episodes = 0usize;
        let mut max_norm: f64 = 0.0;
        for batch in order.chunks(opt.batch_size) {
            let jobs: Vec<(usize, u64)> = batch
                .iter()
                .flat_map(|&i| std::iter::repeat_n(i, cfg.samples_per_prompt))
                .map(|i| (i, rng.gen::<u64>()))
                .collect();
            let policy: &Seq2SeqModel = model;
            let episodes_out: Vec<Result<(Sample, RewardBreakdown)>> = jobs
                .par_iter()
                .map(|&(i, seed)| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    let sample = sample_decode_with(policy, &prompts[i], &mut r)?;
                    let score = reward.reward(&prompts[i], &sample.tokens)?;
                    Ok((sample, score))
                })
                .collect();
            let b = baseline.value;
            let scale = 1.0 / jobs.len() as f64;
            let mut items: Vec<Item<'_>> = Vec::with_capacity(jobs.len());
            for (&(i, _), ep) in jobs.iter().zip(episodes_out) {
                let (sample, score) = ep?;
                let advantage = score.combined - b;
                baseline.update(score.combined);
                reward_sum += score.combined;
                episodes += 1;
                if advantage != 0.0 {
                    items.push((prompts[i].as_slice(), sample.steps(), advantage * scale));
                }
            }
            if items.is_empty() {
                continue;
            }
            let (mut grad, _) = batch_gradient(model, &items)?;
            max_norm = max_norm.max(sgd_step(model, &mut grad, lr, opt.gradient_clip));
        }
        let mean_reward = reward_sum / episodes as f64;
        info!(
            "rl epoch {epoch}: lr {lr:.6} mean reward {mean_reward:.6} baseline {:.6}",
            baseline.value
        );
        records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            loss: None,
            mean_reward: Some(mean_reward),
            validation_perplexity: None,
            max_grad_norm: max_norm,
        });
    }
    Ok(TrainReport {
        mode: "rl".to_string(),
        seed: opt.seed,
        epochs: records,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
