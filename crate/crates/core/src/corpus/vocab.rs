use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::preprocess::tokenize;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_SPECIALS: usize = 4;

/// Default vocabulary cap (most frequent words kept).
pub const DEFAULT_MAX_VOCAB: usize = 12_000;

const SPECIAL_SURFACES: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Ordered token <-> id map. Ids 0..4 are PAD, UNK, SOS and EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from already-ordered regular tokens.
    ///
    /// Duplicates and special surface forms are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: SPECIAL_SURFACES.iter().map(|s| s.to_string()).collect(),
            index: SPECIAL_SURFACES
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), i))
                .collect(),
        };
        for token in tokens {
            let token = token.into();
            if token.is_empty() || vocab.index.contains_key(&token) {
                continue;
            }
            vocab.index.insert(token.clone(), vocab.tokens.len());
            vocab.tokens.push(token);
        }
        vocab
    }

    /// Total size including the four specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_SPECIALS
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Regular (non-special) tokens in id order.
    pub fn regular_tokens(&self) -> &[String] {
        &self.tokens[NUM_SPECIALS..]
    }

    /// Maps ids back to surface text, dropping PAD/SOS/EOS.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| id != PAD && id != SOS && id != EOS)
            .map(|&id| self.token(id).unwrap_or(SPECIAL_SURFACES[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Surface tokens for `ids`, dropping PAD/SOS/EOS.
    pub fn surface_tokens(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != PAD && id != SOS && id != EOS)
            .map(|&id| self.token(id).unwrap_or(SPECIAL_SURFACES[UNK]).to_string())
            .collect()
    }

    /// Writes one regular token per line in id order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file =
            std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for token in self.regular_tokens() {
            writeln!(file, "{token}").map_err(|e| Error::io(path, e))?;
        }
        file.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "vocabulary entries must be single non-empty tokens".into(),
                });
            }
            tokens.push(line);
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// Keeps the `max_size` most frequent tokens; ties go to the token seen first.
pub fn build_vocabulary<S: AsRef<str>>(texts: &[S], max_size: usize) -> Result<Vocabulary> {
    if max_size == 0 {
        return Err(Error::InvalidArgument("max_size must be at least 1".into()));
    }
    // token -> (count, first occurrence)
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut seen = 0usize;
    for text in texts {
        for token in tokenize(text.as_ref()) {
            if SPECIAL_SURFACES.contains(&token) {
                continue;
            }
            let entry = counts.entry(token).or_insert((0, seen));
            entry.0 += 1;
            seen += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts
        .into_iter()
        .map(|(t, (c, first))| (t, c, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size);
    Ok(Vocabulary::from_tokens(
        ranked.into_iter().map(|(t, _, _)| t),
    ))
}

/// Maps tokens to ids (unknowns become [`UNK`]) and truncates to `max_len`.
pub fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    tokenize(text)
        .into_iter()
        .take(max_len)
        .map(|t| vocab.id(t))
        .collect()
}
