//! Python bindings: vocabulary, models and decoding, rewards, metrics and
//! the usefulness analyzer.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dialogrl::affect::AffectLexicon;
use dialogrl::corpus::{self, CorpusSplit, DialogPair, Review, MAX_SEQ_LEN};
use dialogrl::eval;
use dialogrl::feedback::{self, SvmConfig, UsefulnessLabel, DEFAULT_MAX_FEATURES};
use dialogrl::model::{self, Candidate, ModelConfig};
use dialogrl::rewards::{self, DullResponseSet, FeedbackMode, RewardComponents, RewardWeights};
use dialogrl::training::{self, OptimizerConfig};

fn py_err(e: dialogrl::Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait PyRes<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> PyRes<T> for dialogrl::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyfunction]
fn preprocess_text(text: &str) -> String {
    corpus::preprocess_text(text)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    corpus::tokenize(text)
        .into_iter()
        .map(String::from)
        .collect()
}

/// Token/id map with PAD, UNK, SOS and EOS at ids 0-3.
#[pyclass]
struct Vocabulary(corpus::Vocabulary);

#[pymethods]
impl Vocabulary {
    #[new]
    fn new(tokens: Vec<String>) -> Self {
        Vocabulary(corpus::Vocabulary::from_tokens(tokens))
    }

    /// Keeps the `max_size` most frequent tokens of `texts`.
    #[staticmethod]
    #[pyo3(signature = (texts, max_size = corpus::DEFAULT_MAX_VOCAB))]
    fn build(texts: Vec<String>, max_size: usize) -> PyResult<Self> {
        Ok(Vocabulary(corpus::build_vocabulary(&texts, max_size).py()?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Vocabulary(corpus::Vocabulary::load(path).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn id(&self, token: &str) -> usize {
        self.0.id(token)
    }

    fn token(&self, id: usize) -> Option<String> {
        self.0.token(id).map(String::from)
    }

    #[pyo3(signature = (text, max_len = MAX_SEQ_LEN))]
    fn encode(&self, text: &str, max_len: usize) -> Vec<usize> {
        corpus::encode(&corpus::preprocess_text(text), &self.0, max_len)
    }

    fn decode(&self, ids: Vec<usize>) -> String {
        self.0.decode(&ids)
    }
}

/// Attention encoder-decoder; `conditional=False` gives a language model.
#[pyclass]
struct Model(model::Seq2SeqModel);

fn pairs(data: Vec<(Vec<usize>, Vec<usize>)>) -> Vec<DialogPair> {
    data.into_iter()
        .map(|(source, target)| DialogPair {
            source,
            target,
            raw_source: String::new(),
            raw_target: String::new(),
        })
        .collect()
}

/// (tokens, log p(T|S), log p(T), mmi score)
type CandidateTuple = (Vec<usize>, f64, Option<f64>, Option<f64>);

fn candidate_tuple(c: &Candidate) -> CandidateTuple {
    (c.tokens.clone(), c.cond_logprob, c.lm_logprob, c.mmi_score)
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (vocab_size, embed_dim, hidden_size, num_layers = 2, max_decode_len = MAX_SEQ_LEN, conditional = true, seed = 0, init_scale = model::DEFAULT_INIT_SCALE))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        vocab_size: usize,
        embed_dim: usize,
        hidden_size: usize,
        num_layers: usize,
        max_decode_len: usize,
        conditional: bool,
        seed: u64,
        init_scale: f64,
    ) -> PyResult<Self> {
        let mut cfg = ModelConfig::new(vocab_size, embed_dim, hidden_size)
            .with_layers(num_layers)
            .with_max_decode_len(max_decode_len);
        if !conditional {
            cfg = cfg.unconditional();
        }
        Ok(Model(model::Seq2SeqModel::new(cfg, seed, init_scale).py()?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model(model::load_checkpoint(path, None).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model::save_checkpoint(&self.0, path).py()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.0.num_params()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.0.config();
        let d = PyDict::new(py);
        d.set_item("vocab_size", c.vocab_size)?;
        d.set_item("embed_dim", c.embed_dim)?;
        d.set_item("hidden_size", c.hidden_size)?;
        d.set_item("num_layers", c.num_layers)?;
        d.set_item("max_decode_len", c.max_decode_len)?;
        d.set_item("mmi_lambda", c.mmi_lambda)?;
        d.set_item("conditional", c.conditional)?;
        Ok(d)
    }

    /// log p(target + EOS | source).
    fn sequence_log_prob(&self, source: Vec<usize>, target: Vec<usize>) -> PyResult<f64> {
        self.0.sequence_log_prob(&source, &target).py()
    }

    fn greedy(&self, source: Vec<usize>) -> PyResult<Vec<usize>> {
        model::greedy_decode(&self.0, &source).py()
    }

    /// Returns (tokens, per-step log-probabilities).
    fn sample(&self, source: Vec<usize>, seed: u64) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let s = model::sample_decode(&self.0, &source, seed).py()?;
        Ok((s.tokens, s.log_probs))
    }

    /// Beam search; each entry is (tokens, log p(T|S), log p(T), mmi score).
    #[pyo3(signature = (source, n, lm = None, mmi_lambda = None))]
    fn n_best(
        &self,
        source: Vec<usize>,
        n: usize,
        lm: Option<&Model>,
        mmi_lambda: Option<f64>,
    ) -> PyResult<Vec<CandidateTuple>> {
        let mut cands = model::n_best_decode(&self.0, &source, n).py()?;
        if let Some(lm) = lm {
            let lm = model::LanguageModel::from_model(lm.0.clone()).py()?;
            let lambda = mmi_lambda.unwrap_or(self.0.config().mmi_lambda);
            cands = model::mmi_rescore(cands, &lm, lambda).py()?;
        }
        Ok(cands.iter().map(candidate_tuple).collect())
    }

    /// Teacher-forced training; returns the per-epoch mean token loss.
    #[pyo3(signature = (data, epochs, learning_rate, batch_size = 16, gradient_clip = 1.0, decay_rate = 0.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train_mle(
        &mut self,
        data: Vec<(Vec<usize>, Vec<usize>)>,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        gradient_clip: f64,
        decay_rate: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let cfg = OptimizerConfig {
            batch_size,
            learning_rate,
            decay_rate,
            gradient_clip,
            epochs,
            seed,
        };
        let split = CorpusSplit {
            train: pairs(data),
            validation: Vec::new(),
            test: Vec::new(),
        };
        let report = training::train_mle(&mut self.0, &split, &cfg).py()?;
        Ok(report.epochs.iter().filter_map(|e| e.loss).collect())
    }
}

/// Affect lexicon; `None` paths load the bundled synthetic demo lexicon.
fn lexicon(path: Option<PathBuf>) -> PyResult<AffectLexicon> {
    match path {
        Some(p) => AffectLexicon::load(p).py(),
        None => Ok(AffectLexicon::bundled_demo()),
    }
}

#[pyfunction]
fn reward_ease_of_answering(
    model: &Model,
    action: Vec<usize>,
    dull: Vec<Vec<usize>>,
) -> PyResult<f64> {
    let dull = DullResponseSet::from_encoded(dull).py()?;
    rewards::reward_ease_of_answering(&model.0, &action, &dull).py()
}

#[pyfunction]
fn reward_semantic_coherence(
    forward: &Model,
    backward: &Model,
    source: Vec<usize>,
    action: Vec<usize>,
) -> PyResult<f64> {
    rewards::reward_semantic_coherence(&forward.0, &backward.0, &source, &action).py()
}

#[pyfunction]
#[pyo3(signature = (source_words, action_words, lexicon_path = None))]
fn reward_emotional_intelligence(
    source_words: Vec<String>,
    action_words: Vec<String>,
    lexicon_path: Option<PathBuf>,
) -> PyResult<f64> {
    rewards::reward_emotional_intelligence(&lexicon(lexicon_path)?, &source_words, &action_words)
        .py()
}

/// Weighted reward; `weights` is (ea, sc, ei, hf).
#[pyfunction]
#[pyo3(signature = (r_ea, r_sc, r_ei, weights, r_hf = None))]
fn combine_rewards(
    r_ea: f64,
    r_sc: f64,
    r_ei: f64,
    weights: (f64, f64, f64, f64),
    r_hf: Option<f64>,
) -> PyResult<f64> {
    let mut c = RewardComponents::internal(r_ea, r_sc, r_ei);
    if let Some(hf) = r_hf {
        c = c.with_human_feedback(hf);
    }
    let w = RewardWeights::new(weights.0, weights.1, weights.2, weights.3).py()?;
    Ok(rewards::combine_rewards(c, &w).py()?.combined)
}

#[pyfunction]
#[pyo3(signature = (candidate, reference, max_n = eval::DEFAULT_BLEU_ORDER))]
fn bleu(candidate: Vec<String>, reference: Vec<String>, max_n: usize) -> PyResult<f64> {
    eval::bleu(&candidate, &reference, max_n).py()
}

#[pyfunction]
#[pyo3(signature = (candidate, reference, beta = eval::DEFAULT_ROUGE_BETA))]
fn rouge_l(candidate: Vec<String>, reference: Vec<String>, beta: f64) -> PyResult<f64> {
    eval::rouge_l(&candidate, &reference, beta).py()
}

/// Token-level perplexity over (source, target) id pairs, EOS included.
#[pyfunction]
fn perplexity(model: &Model, data: Vec<(Vec<usize>, Vec<usize>)>) -> PyResult<f64> {
    eval::perplexity(&model.0, &pairs(data)).py()
}

#[pyfunction]
#[pyo3(signature = (scores_a, scores_b, resamples = eval::DEFAULT_RESAMPLES, seed = 0))]
fn paired_bootstrap(
    scores_a: Vec<f64>,
    scores_b: Vec<f64>,
    resamples: usize,
    seed: u64,
) -> PyResult<f64> {
    eval::paired_bootstrap(&scores_a, &scores_b, resamples, seed).py()
}

/// Review usefulness classifier.
#[pyclass]
struct Analyzer(feedback::Analyzer);

#[pymethods]
impl Analyzer {
    /// Trains on (useful vote count or None, text) reviews; returns the
    /// analyzer and a summary dict.
    #[staticmethod]
    #[pyo3(signature = (reviews, heldout_frac = 0.2, seed = 0, max_features = DEFAULT_MAX_FEATURES))]
    fn train(
        py: Python<'_>,
        reviews: Vec<(Option<u64>, String)>,
        heldout_frac: f64,
        seed: u64,
        max_features: usize,
    ) -> PyResult<(Self, Py<PyDict>)> {
        let reviews: Vec<Review> = reviews
            .into_iter()
            .map(|(raw, text)| Review {
                text: corpus::preprocess_text(&text),
                useful_raw: raw,
                useful_normalized: None,
            })
            .collect();
        let cfg = SvmConfig {
            seed,
            ..SvmConfig::default()
        };
        let (analyzer, report) =
            feedback::build_analyzer(&reviews, heldout_frac, max_features, &cfg).py()?;
        let d = PyDict::new(py);
        d.set_item("useful", report.useful)?;
        d.set_item("not_useful", report.not_useful)?;
        d.set_item("excluded", report.excluded)?;
        d.set_item("heldout_accuracy", report.heldout_accuracy)?;
        Ok((Analyzer(analyzer), d.unbind()))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Analyzer(feedback::Analyzer::load(path).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).py()
    }

    /// Returns (is_useful, margin).
    fn classify(&self, text: &str) -> PyResult<(bool, f64)> {
        let (label, margin) = self.0.classify(&corpus::preprocess_text(text)).py()?;
        Ok((label == UsefulnessLabel::Useful, margin))
    }

    /// Human-feedback reward for `text`; `mode` is "binary" or "margin".
    #[pyo3(signature = (text, mode = "binary"))]
    fn reward(&self, text: &str, mode: &str) -> PyResult<f64> {
        let mode: FeedbackMode = mode.parse().py()?;
        rewards::reward_human_feedback(&self.0, &corpus::preprocess_text(text), mode).py()
    }
}

#[pymodule]
#[pyo3(name = "dialogrl")]
fn dialogrl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Vocabulary>()?;
    m.add_class::<Model>()?;
    m.add_class::<Analyzer>()?;
    m.add_function(wrap_pyfunction!(preprocess_text, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(reward_ease_of_answering, m)?)?;
    m.add_function(wrap_pyfunction!(reward_semantic_coherence, m)?)?;
    m.add_function(wrap_pyfunction!(reward_emotional_intelligence, m)?)?;
    m.add_function(wrap_pyfunction!(combine_rewards, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(paired_bootstrap, m)?)?;
    m.add("DULL_RESPONSES", rewards::DULL_RESPONSES.to_vec())?;
    Ok(())
}
