//! Usefulness analyzer used as the simulated human-feedback signal.
//!
//! Review usefulness votes are min-max normalized to [0, 10] and split at
//! 5 into two classes. Texts become L2-normalized TF-IDF vectors over
//! unigrams and bigrams, and a linear max-margin classifier is fit by
//! stochastic subgradient descent on the regularized hinge loss.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{preprocess_text, tokenize, Review};
use crate::error::{Error, Result};
use crate::model::checkpoint::{read_count, read_exact, read_f64};

/// Normalized scores at or above this value are labeled useful.
pub const USEFUL_THRESHOLD: f64 = 5.0;
pub const NORMALIZED_MAX: f64 = 10.0;
pub const DEFAULT_MAX_FEATURES: usize = 20_000;

const MAGIC: &[u8; 8] = b"DLRLANZ\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UsefulnessLabel {
    Useful,
    NotUseful,
}

impl UsefulnessLabel {
    fn sign(self) -> f64 {
        match self {
            UsefulnessLabel::Useful => 1.0,
            UsefulnessLabel::NotUseful => -1.0,
        }
    }
}

/// Min-max rescales raw vote counts of rated reviews to [0, 10].
///
/// When every rated review has the same count they all map to 10.
pub fn normalize_usefulness(reviews: &[Review]) -> Result<Vec<Review>> {
    let rated = reviews.iter().filter_map(|r| r.useful_raw);
    let (min, max) = rated
        .fold(None, |acc: Option<(u64, u64)>, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .ok_or(Error::NoRatedReviews)?;
    let range = (max - min) as f64;
    Ok(reviews
        .iter()
        .map(|r| Review {
            text: r.text.clone(),
            useful_raw: r.useful_raw,
            useful_normalized: r.useful_raw.map(|v| {
                if range == 0.0 {
                    NORMALIZED_MAX
                } else {
                    (v - min) as f64 / range * NORMALIZED_MAX
                }
            }),
        })
        .collect())
}

/// Class of a normalized review; `None` means the review is unrated and
/// excluded from training.
pub fn binarize_usefulness(review: &Review) -> Option<UsefulnessLabel> {
    review.useful_normalized.map(|s| {
        if s < USEFUL_THRESHOLD {
            UsefulnessLabel::NotUseful
        } else {
            UsefulnessLabel::Useful
        }
    })
}

/// Sparse feature vector as (feature id, weight) pairs sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i] * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

fn terms(text: &str) -> Vec<String> {
    let normalized = preprocess_text(text);
    let words = tokenize(&normalized);
    let mut out: Vec<String> = words.iter().map(|w| w.to_string()).collect();
    out.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

/// Unigram and bigram feature space with smoothed inverse document
/// frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVocabulary {
    terms: Vec<String>,
    idf: Vec<f64>,
    index: HashMap<String, usize>,
}

impl FeatureVocabulary {
    /// Keeps the `max_features` terms with the highest document frequency
    /// (ties broken alphabetically). `idf = ln((1 + n) / (1 + df)) + 1`.
    pub fn build<S: AsRef<str>>(texts: &[S], max_features: usize) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for text in texts {
            let mut seen = terms(text.as_ref());
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_features);
        let n = texts.len() as f64;
        let idf = ranked
            .iter()
            .map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0)
            .collect();
        Ok(Self::from_parts(
            ranked.into_iter().map(|(t, _)| t).collect(),
            idf,
        ))
    }

    fn from_parts(terms: Vec<String>, idf: Vec<f64>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        FeatureVocabulary { terms, idf, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn idf(&self, id: usize) -> f64 {
        self.idf[id]
    }
}

/// L2-normalized TF-IDF vector of `text`; unknown terms are dropped.
pub fn featurize(text: &str, vocab: &FeatureVocabulary) -> FeatureVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for t in terms(text) {
        if let Some(id) = vocab.id(&t) {
            *counts.entry(id).or_default() += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(id, tf)| (id, tf * vocab.idf(id)))
        .collect();
    entries.sort_by_key(|&(id, _)| id);
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        entries.iter_mut().for_each(|(_, v)| *v /= norm);
    }
    FeatureVector { entries }
}

/// Linear decision function `w . x + b`; non-negative margins are Useful.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub trained: bool,
}

impl LinearClassifier {
    pub fn untrained(dim: usize) -> Self {
        LinearClassifier {
            weights: vec![0.0; dim],
            bias: 0.0,
            trained: false,
        }
    }

    pub fn margin(&self, x: &FeatureVector) -> Result<f64> {
        if !self.trained {
            return Err(Error::UntrainedAnalyzer);
        }
        if let Some(&(id, _)) = x.entries.iter().find(|(id, _)| *id >= self.weights.len()) {
            return Err(Error::InvalidArgument(format!(
                "feature id {id} outside classifier dimension {}",
                self.weights.len()
            )));
        }
        Ok(x.dot(&self.weights) + self.bias)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<(UsefulnessLabel, f64)> {
        let m = self.margin(x)?;
        let label = if m >= 0.0 {
            UsefulnessLabel::Useful
        } else {
            UsefulnessLabel::NotUseful
        };
        Ok((label, m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub epochs: usize,
    /// Initial step size; step `t` uses `step_size / (1 + step_size * lambda * t)`.
    pub step_size: f64,
    /// L2 regularization strength.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            epochs: 30,
            step_size: 0.5,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

/// A fitted classifier and the training objective after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    /// The iterate with the lowest objective seen at an epoch boundary.
    pub classifier: LinearClassifier,
    /// Objective of the best iterate so far, one entry per epoch.
    pub objective_history: Vec<f64>,
}

/// Regularized hinge objective `lambda/2 |w|^2 + mean(max(0, 1 - y m))`.
pub fn hinge_objective(
    weights: &[f64],
    bias: f64,
    data: &[(FeatureVector, UsefulnessLabel)],
    lambda: f64,
) -> f64 {
    let reg = 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let loss: f64 = data
        .iter()
        .map(|(x, y)| (1.0 - y.sign() * (x.dot(weights) + bias)).max(0.0))
        .sum();
    reg + loss / data.len() as f64
}

/// Fits a linear SVM by seeded stochastic subgradient descent.
pub fn train_analyzer(
    labeled: &[(FeatureVector, UsefulnessLabel)],
    dim: usize,
    cfg: &SvmConfig,
) -> Result<SvmFit> {
    let has = |l| labeled.iter().any(|(_, y)| *y == l);
    if labeled.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(has(UsefulnessLabel::Useful) && has(UsefulnessLabel::NotUseful)) {
        return Err(Error::SingleClass);
    }
    if !(cfg.step_size > 0.0 && cfg.lambda >= 0.0) {
        return Err(Error::InvalidArgument(
            "svm step size must be positive and lambda non-negative".into(),
        ));
    }
    if let Some((x, _)) = labeled
        .iter()
        .find(|(x, _)| x.entries.iter().any(|&(id, _)| id >= dim))
    {
        return Err(Error::InvalidArgument(format!(
            "feature vector with {} entries exceeds dimension {dim}",
            x.entries.len()
        )));
    }
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    // w is stored as scale * v so the shrinkage step is O(1).
    let mut scale = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut t = 0usize;
    let mut best = (
        vec![0.0; dim],
        0.0,
        hinge_objective(&w, 0.0, labeled, cfg.lambda),
    );
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = cfg.step_size / (1.0 + cfg.step_size * cfg.lambda * t as f64);
            t += 1;
            let (x, y) = &labeled[i];
            let y = y.sign();
            let margin = scale * x.dot(&w) + b;
            scale *= 1.0 - eta * cfg.lambda;
            if y * margin < 1.0 {
                for &(id, v) in &x.entries {
                    w[id] += eta * y * v / scale;
                }
                b += eta * y;
            }
            if scale < 1e-9 {
                w.iter_mut().for_each(|v| *v *= scale);
                scale = 1.0;
            }
        }
        let current: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let objective = hinge_objective(&current, b, labeled, cfg.lambda);
        if objective < best.2 {
            best = (current, b, objective);
        }
        history.push(best.2);
    }
    Ok(SvmFit {
        classifier: LinearClassifier {
            weights: best.0,
            bias: best.1,
            trained: true,
        },
        objective_history: history,
    })
}

/// Feature space plus classifier: maps raw text to a usefulness decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Analyzer {
    pub features: FeatureVocabulary,
    pub classifier: LinearClassifier,
}

impl Analyzer {
    pub fn classify(&self, text: &str) -> Result<(UsefulnessLabel, f64)> {
        self.classifier.predict(&featurize(text, &self.features))
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.features.len() as u64).to_le_bytes())
            .map_err(io)?;
        for (term, idf) in self.features.terms.iter().zip(&self.features.idf) {
            w.write_all(&(term.len() as u64).to_le_bytes())
                .map_err(io)?;
            w.write_all(term.as_bytes()).map_err(io)?;
            w.write_all(&idf.to_le_bytes()).map_err(io)?;
        }
        if self.classifier.weights.len() != self.features.len() {
            return Err(Error::LengthMismatch {
                left: self.classifier.weights.len(),
                right: self.features.len(),
            });
        }
        for v in &self.classifier.weights {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.write_all(&self.classifier.bias.to_le_bytes())
            .map_err(io)?;
        w.write_all(&[u8::from(self.classifier.trained)])
            .map_err(io)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        if &read_exact::<8>(r)? != MAGIC {
            return Err(Error::Checkpoint("bad analyzer magic string".into()));
        }
        let version = u32::from_le_bytes(read_exact::<4>(r)?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported analyzer version {version}"
            )));
        }
        let n = read_count(r)?;
        let mut terms = Vec::with_capacity(n.min(1 << 20));
        let mut idf = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = read_count(r)?;
            if len > 1 << 16 {
                return Err(Error::Checkpoint(format!("feature term of length {len}")));
            }
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Checkpoint("truncated file".into()))?;
            terms.push(
                String::from_utf8(bytes)
                    .map_err(|_| Error::Checkpoint("feature term is not UTF-8".into()))?,
            );
            idf.push(read_f64(r)?);
        }
        let weights = (0..n).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let bias = read_f64(r)?;
        let trained = match read_exact::<1>(r)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::Checkpoint(format!("bad trained flag {other}"))),
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)
            .map_err(|e| Error::Checkpoint(e.to_string()))?
            != 0
        {
            return Err(Error::Checkpoint("trailing bytes after analyzer".into()));
        }
        Ok(Analyzer {
            features: FeatureVocabulary::from_parts(terms, idf),
            classifier: LinearClassifier {
                weights,
                bias,
                trained,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut std::io::BufReader::new(file))
    }
}

/// Summary of an end-to-end analyzer run over a review corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzerReport {
    pub useful: usize,
    pub not_useful: usize,
    pub excluded: usize,
    pub train_size: usize,
    pub heldout_size: usize,
    /// Accuracy on the held-out reviews, when there are any.
    pub heldout_accuracy: Option<f64>,
    pub objective_history: Vec<f64>,
}

/// Normalizes, binarizes, splits off `heldout_frac` of the rated reviews,
/// builds features on the training part and fits the classifier.
pub fn build_analyzer(
    reviews: &[Review],
    heldout_frac: f64,
    max_features: usize,
    cfg: &SvmConfig,
) -> Result<(Analyzer, AnalyzerReport)> {
    if !(0.0..1.0).contains(&heldout_frac) {
        return Err(Error::InvalidArgument(format!(
            "held-out fraction must be in [0, 1), got {heldout_frac}"
        )));
    }
    let normalized = normalize_usefulness(reviews)?;
    let mut labeled: Vec<(String, UsefulnessLabel)> = normalized
        .iter()
        .filter_map(|r| binarize_usefulness(r).map(|l| (r.text.clone(), l)))
        .collect();
    let excluded = normalized.len() - labeled.len();
    let count = |l| labeled.iter().filter(|(_, y)| *y == l).count();
    let (useful, not_useful) = (
        count(UsefulnessLabel::Useful),
        count(UsefulnessLabel::NotUseful),
    );

    labeled.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_heldout = (labeled.len() as f64 * heldout_frac).round() as usize;
    let heldout = labeled.split_off(labeled.len() - n_heldout);
    let texts: Vec<&str> = labeled.iter().map(|(t, _)| t.as_str()).collect();
    let features = FeatureVocabulary::build(&texts, max_features)?;
    let train: Vec<(FeatureVector, UsefulnessLabel)> = labeled
        .iter()
        .map(|(t, l)| (featurize(t, &features), *l))
        .collect();
    let fit = train_analyzer(&train, features.len(), cfg)?;
    let analyzer = Analyzer {
        features,
        classifier: fit.classifier,
    };
    let heldout_accuracy = if heldout.is_empty() {
        None
    } else {
        let mut correct = 0;
        for (text, label) in &heldout {
            if analyzer.classify(text)?.0 == *label {
                correct += 1;
            }
        }
        Some(correct as f64 / heldout.len() as f64)
    };
    let report = AnalyzerReport {
        useful,
        not_useful,
        excluded,
        train_size: train.len(),
        heldout_size: heldout.len(),
        heldout_accuracy,
        objective_history: fit.objective_history,
    };
    Ok((analyzer, report))
}
