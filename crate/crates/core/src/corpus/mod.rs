//! Dialog and review corpora: loading, normalization, splitting and the
//! vocabulary.

mod preprocess;
mod vocab;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use preprocess::{preprocess_text, tokenize};
pub use vocab::{
    build_vocabulary, encode, Vocabulary, DEFAULT_MAX_VOCAB, EOS, NUM_SPECIALS, PAD, SOS, UNK,
};

/// Maximum number of tokens per utterance before SOS/EOS framing.
pub const MAX_SEQ_LEN: usize = 20;

/// A normalized (source, target) text pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPair {
    pub source: String,
    pub target: String,
}

/// An encoded dialog exchange. Both id sequences are non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogPair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub raw_source: String,
    pub raw_target: String,
}

impl DialogPair {
    /// The same exchange with prompt and response swapped.
    pub fn reversed(&self) -> DialogPair {
        DialogPair {
            source: self.target.clone(),
            target: self.source.clone(),
            raw_source: self.raw_target.clone(),
            raw_target: self.raw_source.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub text: String,
    pub useful_raw: Option<u64>,
    pub useful_normalized: Option<f64>,
}

/// Disjoint train/validation/test partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

impl<T> CorpusSplit<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> CorpusSplit<U> {
        CorpusSplit {
            train: self.train.iter().map(&mut f).collect(),
            validation: self.validation.iter().map(&mut f).collect(),
            test: self.test.iter().map(&mut f).collect(),
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line).to_string();
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

/// Reads `source<TAB>target` lines and normalizes both sides.
pub fn load_dialog_corpus(path: impl AsRef<Path>) -> Result<Vec<TextPair>> {
    let path = path.as_ref();
    read_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("expected 2 tab-separated fields, found {}", fields.len()),
                });
            }
            Ok(TextPair {
                source: preprocess_text(fields[0]),
                target: preprocess_text(fields[1]),
            })
        })
        .collect()
}

/// Reads `useful_raw<TAB>text` lines. An empty first field means unrated.
pub fn load_review_corpus(path: impl AsRef<Path>) -> Result<Vec<Review>> {
    let path = path.as_ref();
    read_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let malformed = |message: String| Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let (score, text) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected 2 tab-separated fields, found 1".to_string()))?;
            if text.contains('\t') {
                return Err(malformed(format!(
                    "expected 2 tab-separated fields, found {}",
                    line.split('\t').count()
                )));
            }
            let useful_raw = match score.trim() {
                "" => None,
                s => Some(
                    s.parse::<u64>()
                        .map_err(|_| malformed(format!("invalid usefulness count `{s}`")))?,
                ),
            };
            Ok(Review {
                text: preprocess_text(text),
                useful_raw,
                useful_normalized: None,
            })
        })
        .collect()
}

/// Writes normalized pairs as `source<TAB>target` lines.
pub fn write_dialog_corpus(path: impl AsRef<Path>, pairs: &[TextPair]) -> Result<()> {
    let path = path.as_ref();
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for p in pairs {
        writeln!(out, "{}\t{}", p.source, p.target).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Deterministic shuffled split; `validation` and `test` are fractions of
/// the whole corpus.
pub fn split_corpus<T>(
    mut items: Vec<T>,
    validation: f64,
    test: f64,
    seed: u64,
) -> Result<CorpusSplit<T>> {
    if !(0.0..1.0).contains(&validation) || !(0.0..1.0).contains(&test) || validation + test >= 1.0
    {
        return Err(Error::InvalidArgument(format!(
            "split fractions {validation}/{test} must be in [0,1) and sum below 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let n = items.len();
    let n_test = (n as f64 * test).round() as usize;
    let n_valid = (n as f64 * validation).round() as usize;
    let test_items = items.split_off(n - n_test);
    let valid_items = items.split_off(n - n_test - n_valid);
    Ok(CorpusSplit {
        train: items,
        validation: valid_items,
        test: test_items,
    })
}

/// Encodes text pairs, dropping pairs where either side is empty.
pub fn encode_pairs(pairs: &[TextPair], vocab: &Vocabulary, max_len: usize) -> Vec<DialogPair> {
    pairs
        .iter()
        .filter_map(|p| {
            let source = encode(&p.source, vocab, max_len);
            let target = encode(&p.target, vocab, max_len);
            (!source.is_empty() && !target.is_empty()).then(|| DialogPair {
                source,
                target,
                raw_source: p.source.clone(),
                raw_target: p.target.clone(),
            })
        })
        .collect()
}

/// Drops training pairs whose target contains UNK. Validation and test are
/// left untouched.
pub fn filter_training_split(split: CorpusSplit<DialogPair>) -> CorpusSplit<DialogPair> {
    CorpusSplit {
        train: split
            .train
            .into_iter()
            .filter(|p| !p.target.contains(&UNK))
            .collect(),
        validation: split.validation,
        test: split.test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn pair(vocab: &Vocabulary, s: &str, t: &str) -> DialogPair {
        encode_pairs(
            &[TextPair {
                source: s.into(),
                target: t.into(),
            }],
            vocab,
            MAX_SEQ_LEN,
        )
        .remove(0)
    }

    #[test]
    fn filter_only_touches_training_targets() {
        let vocab = Vocabulary::from_tokens(["hi", "there"]);
        let split = CorpusSplit {
            train: vec![pair(&vocab, "hi", "there"), pair(&vocab, "hi", "zebra")],
            validation: vec![pair(&vocab, "hi", "zebra")],
            test: vec![pair(&vocab, "hi", "zebra")],
        };
        let filtered = filter_training_split(split);
        assert_eq!(filtered.train.len(), 1);
        assert_eq!(filtered.train[0].raw_target, "there");
        assert_eq!(filtered.validation.len(), 1);
        assert_eq!(filtered.test.len(), 1);
    }

    #[test]
    fn loads_dialogs_and_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        std::fs::write(&path, "Hi!!\tHello\nhow are you?\tFine\nbye\tSee ya\n").unwrap();
        let pairs = load_dialog_corpus(&path).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].source, "hi!");

        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "a\tb\nno tab here\n").unwrap();
        match load_dialog_corpus(&bad) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(load_dialog_corpus(dir.path().join("missing.tsv"))
            .unwrap_err()
            .is_io());
    }

    #[test]
    fn loads_reviews_with_missing_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "3\tGreat food").unwrap();
        writeln!(f, "\tNo rating here").unwrap();
        writeln!(f, "0\tmeh").unwrap();
        drop(f);
        let reviews = load_review_corpus(&path).unwrap();
        assert_eq!(reviews.len(), 3);
        assert_eq!(reviews[0].useful_raw, Some(3));
        assert_eq!(reviews[1].useful_raw, None);
        assert_eq!(reviews[1].text, "no rating here");

        std::fs::write(&path, "x\ttext\n").unwrap();
        assert!(matches!(
            load_review_corpus(&path),
            Err(Error::Malformed { line: 1, .. })
        ));
        std::fs::write(&path, "text only\n").unwrap();
        assert!(matches!(
            load_review_corpus(&path),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn split_is_a_disjoint_partition(n in 0usize..200, seed in any::<u64>()) {
            let split = split_corpus((0..n).collect(), 0.1, 0.05, seed).unwrap();
            let mut all: Vec<usize> = split.train.iter()
                .chain(&split.validation)
                .chain(&split.test)
                .copied()
                .collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn filtered_training_targets_have_no_unk(
            targets in prop::collection::vec("[a-h]( [a-h]){0,5}", 1..30)
        ) {
            let vocab = Vocabulary::from_tokens(["a", "b", "c", "d"]);
            let pairs: Vec<TextPair> = targets
                .iter()
                .map(|t| TextPair { source: "a".into(), target: t.clone() })
                .collect();
            let split = CorpusSplit {
                train: encode_pairs(&pairs, &vocab, MAX_SEQ_LEN),
                validation: vec![],
                test: vec![],
            };
            let filtered = filter_training_split(split);
            prop_assert!(filtered.train.iter().all(|p| !p.target.contains(&UNK)));
        }
    }
}
