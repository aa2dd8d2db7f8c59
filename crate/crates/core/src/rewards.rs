//! Internal rewards (ease of answering, semantic coherence, emotional
//! intelligence), the external human-feedback reward, and their mixture.

use std::path::Path;
use std::str::FromStr;

use log::warn;

use crate::affect::{w2av_mean, AffectLexicon};
use crate::corpus::{encode, preprocess_text, Vocabulary, MAX_SEQ_LEN, UNK};
use crate::error::{Error, Result};
use crate::feedback::{Analyzer, UsefulnessLabel};
use crate::model::Seq2SeqModel;

/// Generic replies the ease-of-answering reward steers away from.
pub const DULL_RESPONSES: [&str; 10] = [
    "I don't know.",
    "I don't know what I mean.",
    "I don't know what you're talking about.",
    "You don't know.",
    "You know what I mean.",
    "You know what I'm saying.",
    "You don't know anything.",
    "I am not sure.",
    "I know what you mean.",
    "I do not know anything.",
];

/// Reward given to an empty sampled response unless configured otherwise.
pub const DEFAULT_EMPTY_RESPONSE_REWARD: f64 = -10.0;

/// Encoded dull responses. Entries that would need UNK are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DullResponseSet {
    responses: Vec<Vec<usize>>,
}

impl DullResponseSet {
    /// Preprocesses and encodes `texts`, skipping (with a warning) any
    /// entry that is empty or contains out-of-vocabulary words.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], vocab: &Vocabulary) -> Self {
        let mut responses = Vec::new();
        for text in texts {
            let text = text.as_ref();
            let ids = encode(&preprocess_text(text), vocab, MAX_SEQ_LEN);
            if ids.is_empty() || ids.contains(&UNK) {
                warn!("dropping dull response {text:?}: not encodable without UNK");
            } else {
                responses.push(ids);
            }
        }
        DullResponseSet { responses }
    }

    /// The ten built-in dull responses.
    pub fn standard(vocab: &Vocabulary) -> Self {
        Self::from_texts(&DULL_RESPONSES, vocab)
    }

    /// One response per line; blank lines are ignored.
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        Ok(Self::from_texts(&lines, vocab))
    }

    pub fn from_encoded(responses: Vec<Vec<usize>>) -> Result<Self> {
        if responses.iter().any(Vec::is_empty) {
            return Err(Error::EmptyInput {
                what: "dull response",
            });
        }
        Ok(DullResponseSet { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn responses(&self) -> &[Vec<usize>] {
        &self.responses
    }

    pub fn contains(&self, tokens: &[usize]) -> bool {
        self.responses.iter().any(|r| r == tokens)
    }
}

/// Mixture weights for (r_EA, r_SC, r_EI, r_HF).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub ease_of_answering: f64,
    pub semantic_coherence: f64,
    pub emotional_intelligence: f64,
    pub human_feedback: f64,
}

impl RewardWeights {
    pub fn new(ea: f64, sc: f64, ei: f64, hf: f64) -> Result<Self> {
        let all = [ea, sc, ei, hf];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "reward weights must be finite and non-negative, got {all:?}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "reward weights must sum to 1, got {sum}"
            )));
        }
        Ok(RewardWeights {
            ease_of_answering: ea,
            semantic_coherence: sc,
            emotional_intelligence: ei,
            human_feedback: hf,
        })
    }

    /// Internal rewards only, used for the movie-dialog corpus.
    pub fn cornell() -> Self {
        RewardWeights {
            ease_of_answering: 0.25,
            semantic_coherence: 0.35,
            emotional_intelligence: 0.40,
            human_feedback: 0.0,
        }
    }

    /// Equal weights including human feedback, used for the review corpus.
    pub fn yelp() -> Self {
        RewardWeights {
            ease_of_answering: 0.25,
            semantic_coherence: 0.25,
            emotional_intelligence: 0.25,
            human_feedback: 0.25,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.ease_of_answering,
            self.semantic_coherence,
            self.emotional_intelligence,
            self.human_feedback,
        ]
    }
}

impl FromStr for RewardWeights {
    type Err = Error;

    /// Parses `ea,sc,ei,hf`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad reward weight {p:?}")))
            })
            .collect::<Result<_>>()?;
        match parts[..] {
            [ea, sc, ei, hf] => RewardWeights::new(ea, sc, ei, hf),
            _ => Err(Error::InvalidArgument(format!(
                "expected four comma-separated reward weights, got {s:?}"
            ))),
        }
    }
}

/// Reward components before mixing. A component may be absent when its
/// weight is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardComponents {
    pub r_ea: Option<f64>,
    pub r_sc: Option<f64>,
    pub r_ei: Option<f64>,
    pub r_hf: Option<f64>,
}

impl RewardComponents {
    pub fn internal(r_ea: f64, r_sc: f64, r_ei: f64) -> Self {
        RewardComponents {
            r_ea: Some(r_ea),
            r_sc: Some(r_sc),
            r_ei: Some(r_ei),
            r_hf: None,
        }
    }

    pub fn with_human_feedback(mut self, r_hf: f64) -> Self {
        self.r_hf = Some(r_hf);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub components: RewardComponents,
    pub combined: f64,
}

/// Weighted sum of the components. Every component with a positive weight
/// must be present; components with zero weight are ignored.
pub fn combine_rewards(
    components: RewardComponents,
    weights: &RewardWeights,
) -> Result<RewardBreakdown> {
    let pairs = [
        ("r_ea", components.r_ea, weights.ease_of_answering),
        ("r_sc", components.r_sc, weights.semantic_coherence),
        ("r_ei", components.r_ei, weights.emotional_intelligence),
        ("r_hf", components.r_hf, weights.human_feedback),
    ];
    let mut combined = 0.0;
    for (name, value, weight) in pairs {
        if weight > 0.0 {
            let v = value.ok_or_else(|| {
                Error::WeightMismatch(format!("{name} has weight {weight} but was not provided"))
            })?;
            combined += weight * v;
        }
    }
    Ok(RewardBreakdown {
        components,
        combined,
    })
}

/// `-(1/|S|) * sum_s (1/N_s) * log p(s | action)` over the dull set, with
/// N_s counting the response tokens plus EOS.
pub fn reward_ease_of_answering(
    model: &Seq2SeqModel,
    action: &[usize],
    dull: &DullResponseSet,
) -> Result<f64> {
    if dull.is_empty() {
        return Err(Error::EmptyInput {
            what: "dull response set",
        });
    }
    if action.is_empty() {
        return Err(Error::EmptyInput { what: "action" });
    }
    let mut total = 0.0;
    for s in dull.responses() {
        total += model.sequence_log_prob(action, s)? / (s.len() + 1) as f64;
    }
    Ok(-total / dull.len() as f64)
}

/// `log p_fwd(action | source) / N_action + log p_bwd(source | action) / N_source`,
/// lengths counting EOS.
pub fn reward_semantic_coherence(
    forward: &Seq2SeqModel,
    backward: &Seq2SeqModel,
    source: &[usize],
    action: &[usize],
) -> Result<f64> {
    if source.is_empty() {
        return Err(Error::EmptyInput { what: "source" });
    }
    if action.is_empty() {
        return Err(Error::EmptyInput { what: "action" });
    }
    let fwd = forward.sequence_log_prob(source, action)? / (action.len() + 1) as f64;
    let bwd = backward.sequence_log_prob(action, source)? / (source.len() + 1) as f64;
    Ok(fwd + bwd)
}

/// Negated Euclidean distance between the mean affect of source and action.
pub fn reward_emotional_intelligence<S: AsRef<str>, T: AsRef<str>>(
    lexicon: &AffectLexicon,
    source: &[S],
    action: &[T],
) -> Result<f64> {
    let src = w2av_mean(source, lexicon)?;
    let act = w2av_mean(action, lexicon)?;
    Ok(-src.distance(act))
}

/// How the analyzer decision becomes a reward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FeedbackMode {
    /// 1 for Useful, 0 for NotUseful.
    #[default]
    Binary,
    /// The decision margin clamped to [0, 1].
    Margin,
}

impl FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(FeedbackMode::Binary),
            "margin" => Ok(FeedbackMode::Margin),
            _ => Err(Error::InvalidArgument(format!(
                "feedback mode must be binary or margin, got {s:?}"
            ))),
        }
    }
}

pub fn reward_human_feedback(analyzer: &Analyzer, text: &str, mode: FeedbackMode) -> Result<f64> {
    let (label, margin) = analyzer.classify(text)?;
    Ok(match mode {
        FeedbackMode::Binary => match label {
            UsefulnessLabel::Useful => 1.0,
            UsefulnessLabel::NotUseful => 0.0,
        },
        FeedbackMode::Margin => margin.clamp(0.0, 1.0),
    })
}

/// Scores a sampled response for the policy-gradient update.
pub trait RewardFn: Sync {
    fn reward(&self, source: &[usize], action: &[usize]) -> Result<RewardBreakdown>;
}

/// Everything needed to compute the combined reward of a response.
#[derive(Debug, Clone)]
pub struct RewardContext<'a> {
    /// Frozen pretrained forward model, used by r_EA and r_SC.
    pub forward: &'a Seq2SeqModel,
    pub backward: Option<&'a Seq2SeqModel>,
    pub lexicon: &'a AffectLexicon,
    pub vocab: &'a Vocabulary,
    pub dull: &'a DullResponseSet,
    pub analyzer: Option<&'a Analyzer>,
    pub feedback_mode: FeedbackMode,
    pub weights: RewardWeights,
    /// Combined reward assigned to an empty response.
    pub empty_response_reward: f64,
}

impl<'a> RewardContext<'a> {
    /// Checks that every component with a positive weight can be computed.
    pub fn validate(&self) -> Result<()> {
        if self.weights.human_feedback > 0.0 && self.analyzer.is_none() {
            return Err(Error::AnalyzerRequired);
        }
        if self.weights.semantic_coherence > 0.0 && self.backward.is_none() {
            return Err(Error::ReverseModelRequired);
        }
        if self.weights.ease_of_answering > 0.0 && self.dull.is_empty() {
            return Err(Error::EmptyInput {
                what: "dull response set",
            });
        }
        Ok(())
    }

    /// Computes the weighted components of `action` as a reply to `source`.
    pub fn evaluate(&self, source: &[usize], action: &[usize]) -> Result<RewardBreakdown> {
        if action.is_empty() {
            return Ok(RewardBreakdown {
                components: RewardComponents::default(),
                combined: self.empty_response_reward,
            });
        }
        let w = &self.weights;
        let mut c = RewardComponents::default();
        if w.ease_of_answering > 0.0 {
            c.r_ea = Some(reward_ease_of_answering(self.forward, action, self.dull)?);
        }
        if w.semantic_coherence > 0.0 {
            let bwd = self.backward.ok_or(Error::ReverseModelRequired)?;
            c.r_sc = Some(reward_semantic_coherence(
                self.forward,
                bwd,
                source,
                action,
            )?);
        }
        if w.emotional_intelligence > 0.0 {
            c.r_ei = Some(reward_emotional_intelligence(
                self.lexicon,
                &self.vocab.surface_tokens(source),
                &self.vocab.surface_tokens(action),
            )?);
        }
        if w.human_feedback > 0.0 {
            let analyzer = self.analyzer.ok_or(Error::AnalyzerRequired)?;
            c.r_hf = Some(reward_human_feedback(
                analyzer,
                &self.vocab.decode(action),
                self.feedback_mode,
            )?);
        }
        combine_rewards(c, w)
    }
}

impl RewardFn for RewardContext<'_> {
    fn reward(&self, source: &[usize], action: &[usize]) -> Result<RewardBreakdown> {
        self.evaluate(source, action)
    }
}
