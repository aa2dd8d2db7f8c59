//! Automated metrics and paired significance testing.

use std::collections::HashMap;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::DialogPair;
use crate::error::{Error, Result};
use crate::model::Seq2SeqModel;

pub const DEFAULT_BLEU_ORDER: usize = 4;
pub const DEFAULT_ROUGE_BETA: f64 = 1.2;
pub const DEFAULT_RESAMPLES: usize = 10_000;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate's n-gram count.
pub fn clipped_ngram_matches<T: Eq + Hash>(
    candidate: &[T],
    reference: &[T],
    n: usize,
) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, (candidate.len() + 1).saturating_sub(n))
}

/// Sentence BLEU with uniform weights over orders 1..=max_n.
///
/// Orders n >= 2 with no matches use add-one smoothing,
/// `1 / (count + 1)`. A zero unigram precision gives 0.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyInput { what: "reference" });
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument(
            "BLEU order must be at least 1".into(),
        ));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, total) = clipped_ngram_matches(candidate, reference, n);
        let p = if m > 0 {
            m as f64 / total as f64
        } else if n == 1 {
            return Ok(0.0);
        } else {
            1.0 / (total + 1) as f64
        };
        log_sum += p.ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = (1.0 - r / c).exp().min(1.0);
    Ok(bp * (log_sum / max_n as f64).exp())
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure `(1 + b^2) P R / (R + b^2 P)`.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T], beta: f64) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyInput { what: "reference" });
    }
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * p * r / (r + b2 * p))
}

/// Corpus-level perplexity, normalized by target tokens plus one EOS per
/// pair.
pub fn perplexity(model: &Seq2SeqModel, pairs: &[DialogPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput { what: "pairs" });
    }
    let mut log_prob = 0.0;
    let mut tokens = 0usize;
    for p in pairs {
        log_prob += model.sequence_log_prob(&p.source, &p.target)?;
        tokens += p.target.len() + 1;
    }
    Ok((-log_prob / tokens as f64).exp())
}

/// Two-sided paired bootstrap p-value for `mean(a) - mean(b)`.
///
/// Resampled differences are centered on the observed one, so
/// `p = (1 + #{|d* - d| >= |d|}) / (R + 1)`.
pub fn paired_bootstrap(
    scores_a: &[f64],
    scores_b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::LengthMismatch {
            left: scores_a.len(),
            right: scores_b.len(),
        });
    }
    let n = scores_a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "paired bootstrap needs at least two examples".into(),
        ));
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be positive".into()));
    }
    let diffs: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += diffs[rng.gen_range(0..n)];
        }
        let d = sum / n as f64;
        // Tolerance keeps exact ties (e.g. identical systems) counted despite
        // summation-order rounding.
        if (d - observed).abs() >= observed.abs() - 1e-12 {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (resamples + 1) as f64)
}

/// Scores both systems per example with `metric` and bootstraps the
/// difference of their means.
pub fn paired_bootstrap_metric<T, F>(
    metric: F,
    system_a: &[Vec<T>],
    system_b: &[Vec<T>],
    references: &[Vec<T>],
    resamples: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[T], &[T]) -> Result<f64>,
{
    for other in [system_b.len(), references.len()] {
        if other != system_a.len() {
            return Err(Error::LengthMismatch {
                left: system_a.len(),
                right: other,
            });
        }
    }
    let score = |sys: &[Vec<T>]| -> Result<Vec<f64>> {
        sys.iter()
            .zip(references)
            .map(|(c, r)| metric(c, r))
            .collect()
    };
    paired_bootstrap(&score(system_a)?, &score(system_b)?, resamples, seed)
}

/// Averaged sentence-level metrics over a set of outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub bleu: f64,
    pub rouge_l: f64,
    /// Only available when a model is supplied.
    pub perplexity: Option<f64>,
    pub n_examples: usize,
}

/// Mean sentence BLEU and ROUGE-L of `candidates` against `references`.
pub fn text_metrics<T: Eq + Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
) -> Result<MetricReport> {
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput { what: "outputs" });
    }
    let mut b = 0.0;
    let mut r = 0.0;
    for (c, rf) in candidates.iter().zip(references) {
        b += bleu(c, rf, DEFAULT_BLEU_ORDER)?;
        r += rouge_l(c, rf, DEFAULT_ROUGE_BETA)?;
    }
    let n = candidates.len() as f64;
    Ok(MetricReport {
        bleu: b / n,
        rouge_l: r / n,
        perplexity: None,
        n_examples: candidates.len(),
    })
}
