//! Greedy, sampled and beam decoding plus MMI reranking.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EOS, SOS};
use crate::error::{Error, Result};

use super::network::{DecoderState, Seq2SeqModel};
use super::LanguageModel;

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Argmax decoding until EOS or `max_decode_len` tokens. EOS is not
/// included in the output.
pub fn greedy_decode(model: &Seq2SeqModel, source: &[usize]) -> Result<Vec<usize>> {
    let session = model.session(source)?;
    let mut state = session.initial_state();
    let mut prev = SOS;
    let mut out = Vec::new();
    for _ in 0..model.config().max_decode_len {
        let (next, lp) = session.step(&state, prev);
        let tok = argmax(&lp);
        if tok == EOS {
            break;
        }
        out.push(tok);
        state = next;
        prev = tok;
    }
    Ok(out)
}

/// A sampled response and the log-probabilities of every emitted token.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Response tokens, without EOS.
    pub tokens: Vec<usize>,
    /// One entry per emitted token, including the final EOS when present.
    pub log_probs: Vec<f64>,
    /// Whether decoding stopped on EOS (rather than the length cap).
    pub terminated: bool,
}

impl Sample {
    /// Emitted token ids, including EOS when the sample terminated.
    pub fn steps(&self) -> Vec<usize> {
        let mut s = self.tokens.clone();
        if self.terminated {
            s.push(EOS);
        }
        s
    }

    pub fn log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

fn draw(log_probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_positive = i;
        }
        cumulative += p;
        if cumulative > u {
            return i;
        }
    }
    last_positive
}

/// Draws a response token by token from the model's distribution.
pub fn sample_decode_with(
    model: &Seq2SeqModel,
    source: &[usize],
    rng: &mut impl Rng,
) -> Result<Sample> {
    let session = model.session(source)?;
    let mut state = session.initial_state();
    let mut prev = SOS;
    let mut sample = Sample {
        tokens: Vec::new(),
        log_probs: Vec::new(),
        terminated: false,
    };
    for _ in 0..model.config().max_decode_len {
        let (next, lp) = session.step(&state, prev);
        let tok = draw(&lp, rng);
        sample.log_probs.push(lp[tok]);
        if tok == EOS {
            sample.terminated = true;
            break;
        }
        sample.tokens.push(tok);
        state = next;
        prev = tok;
    }
    Ok(sample)
}

pub fn sample_decode(model: &Seq2SeqModel, source: &[usize], seed: u64) -> Result<Sample> {
    sample_decode_with(model, source, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// An n-best hypothesis, optionally rescored with MMI.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Response tokens, without EOS.
    pub tokens: Vec<usize>,
    /// Whether the hypothesis ended with EOS.
    pub finished: bool,
    /// log p(T | S) over the emitted tokens (EOS included when finished).
    pub cond_logprob: f64,
    /// log p(T) under the language model, once rescored.
    pub lm_logprob: Option<f64>,
    pub mmi_score: Option<f64>,
}

impl Candidate {
    pub fn steps(&self) -> Vec<usize> {
        let mut s = self.tokens.clone();
        if self.finished {
            s.push(EOS);
        }
        s
    }
}

fn by_score_then_tokens(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

struct Hypothesis {
    tokens: Vec<usize>,
    score: f64,
    state: DecoderState,
}

/// Beam search of width `n`; returns up to `n` candidates sorted by
/// `cond_logprob` descending.
pub fn n_best_decode(model: &Seq2SeqModel, source: &[usize], n: usize) -> Result<Vec<Candidate>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let session = model.session(source)?;
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        state: session.initial_state(),
    }];
    let mut done: Vec<Candidate> = Vec::new();

    for _ in 0..model.config().max_decode_len {
        let stepped: Vec<(DecoderState, Vec<f64>)> = alive
            .iter()
            .map(|hyp| session.step(&hyp.state, hyp.tokens.last().copied().unwrap_or(SOS)))
            .collect();
        // (score, parent, token, sequence including the token)
        let mut expansions: Vec<(f64, usize, usize, Vec<usize>)> = Vec::new();
        for (parent, (hyp, (_, lp))) in alive.iter().zip(&stepped).enumerate() {
            for (tok, &l) in lp.iter().enumerate() {
                let mut seq = hyp.tokens.clone();
                seq.push(tok);
                expansions.push((hyp.score + l, parent, tok, seq));
            }
        }
        expansions.sort_by(|a, b| by_score_then_tokens((a.0, &a.3), (b.0, &b.3)));
        expansions.truncate(n);

        let mut next_alive = Vec::new();
        for (score, parent, tok, mut seq) in expansions {
            if tok == EOS {
                seq.pop();
                done.push(Candidate {
                    tokens: seq,
                    finished: true,
                    cond_logprob: score,
                    lm_logprob: None,
                    mmi_score: None,
                });
            } else {
                next_alive.push(Hypothesis {
                    tokens: seq,
                    score,
                    state: stepped[parent].0.clone(),
                });
            }
        }
        alive = next_alive;
        if alive.is_empty() {
            break;
        }
    }
    done.extend(alive.into_iter().map(|hyp| Candidate {
        tokens: hyp.tokens,
        finished: false,
        cond_logprob: hyp.score,
        lm_logprob: None,
        mmi_score: None,
    }));
    done.sort_by(|a, b| {
        by_score_then_tokens((a.cond_logprob, &a.tokens), (b.cond_logprob, &b.tokens))
    });
    done.truncate(n);
    Ok(done)
}

/// Scores each candidate by `cond_logprob - lambda * lm_logprob` and sorts
/// by that score (stable, descending).
pub fn mmi_rescore(
    mut candidates: Vec<Candidate>,
    language_model: &LanguageModel,
    lambda: f64,
) -> Result<Vec<Candidate>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput { what: "candidates" });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mmi lambda must be finite and non-negative, got {lambda}"
        )));
    }
    for c in &mut candidates {
        let lm = language_model.steps_log_prob(&c.steps())?;
        c.lm_logprob = Some(lm);
        c.mmi_score = Some(c.cond_logprob - lambda * lm);
    }
    candidates.sort_by(|a, b| {
        b.mmi_score
            .partial_cmp(&a.mmi_score)
            .unwrap_or(Ordering::Equal)
    });
    Ok(candidates)
}

/// Reranks precomputed candidates whose `lm_logprob` is already set.
pub fn mmi_rerank_scored(mut candidates: Vec<Candidate>, lambda: f64) -> Result<Vec<Candidate>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput { what: "candidates" });
    }
    for c in &mut candidates {
        let lm = c
            .lm_logprob
            .ok_or_else(|| Error::InvalidArgument("candidate missing lm_logprob".into()))?;
        c.mmi_score = Some(c.cond_logprob - lambda * lm);
    }
    candidates.sort_by(|a, b| {
        b.mmi_score
            .partial_cmp(&a.mmi_score)
            .unwrap_or(Ordering::Equal)
    });
    Ok(candidates)
}
